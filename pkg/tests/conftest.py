import numpy as np
import pytest

from explagree import _kernels
from explagree.shapes import gen_shapes_dataset
from explagree.vit import ToyViT, ViTConfig, init_params, train

BACKENDS = [_kernels.python_backend]
if _kernels.compiled_backend is not None:
    BACKENDS.append(_kernels.compiled_backend)


@pytest.fixture(params=BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    b = request.param
    for name in ("dilate", "erode", "pair_counts", "otsu_index", "shapley_table"):
        monkeypatch.setattr(_kernels, name, getattr(b, name))
    return b


@pytest.fixture(scope="session")
def trained_params():
    """The toy ViT at the reference settings: 600 images, 30 epochs, lr 0.01, batch 16, seed 1."""
    cfg = ViTConfig(seed=1)
    ds = gen_shapes_dataset(600, 1, cfg)
    return train(init_params(cfg), ds, epochs=30, learning_rate=0.01, batch_size=16, momentum=0.9)


@pytest.fixture(scope="session")
def trained_model(trained_params):
    return ToyViT(trained_params)


@pytest.fixture(scope="session")
def eval_set():
    return gen_shapes_dataset(20, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; returns ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, summary: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {summary}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
