"""Both kernel backends against independent oracles and against each other."""
import numpy as np
import pytest
from scipy import ndimage

from explagree import _kernels
from explagree._kernels import python_backend

compiled = _kernels.compiled_backend
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


@pytest.mark.parametrize("k", [1, 3, 5])
def test_dilate_erode_match_ndimage(backend, rng, k):
    se = np.ones((k, k), dtype=bool)
    for _ in range(30):
        m = rng.random(rng.integers(1, 20, size=2)) < rng.uniform(0.05, 0.9)
        d = backend.dilate(m.astype(np.uint8), k).astype(bool)
        e = backend.erode(m.astype(np.uint8), k).astype(bool)
        assert np.array_equal(d, ndimage.binary_dilation(m, se, border_value=0))
        assert np.array_equal(e, ndimage.binary_erosion(m, se, border_value=1))


def test_pair_counts_brute_force(backend, rng):
    for _ in range(50):
        shape = tuple(rng.integers(1, 30, size=2))
        a, b = rng.random(shape) < 0.4, rng.random(shape) < 0.6
        inter = sum(1 for i in np.ndindex(shape) if a[i] and b[i])
        assert backend.pair_counts(a.astype(np.uint8), b.astype(np.uint8)) == (inter, int(a.sum()), int(b.sum()))


def _otsu_oracle(values, thresholds):
    best, best_var = -1, 0.0
    n = len(values)
    for k, t in enumerate(thresholds):
        lo, hi = values[values <= t], values[values > t]
        if len(lo) == 0 or len(hi) == 0:
            continue
        var = len(lo) / n * len(hi) / n * (hi.mean() - lo.mean()) ** 2
        if var > best_var * (1 + 1e-12):
            best, best_var = k, var
    return best, best_var


def test_otsu_index_against_loop(backend, rng):
    thr = (np.arange(256) + 0.5) / 256
    for _ in range(40):
        v = np.clip(np.concatenate([rng.normal(0.2, 0.05, 300), rng.normal(0.7, 0.1, 200)]), 0, 1)
        idx, var = backend.otsu_index(v, thr)
        o_idx, o_var = _otsu_oracle(v, thr)
        assert var == pytest.approx(o_var, rel=1e-9)
        assert idx == o_idx


def test_otsu_index_degenerate(backend):
    thr = (np.arange(256) + 0.5) / 256
    assert backend.otsu_index(np.full(10, 0.3), thr)[0] == -1


def test_shapley_table_additive_game(backend):
    w = np.array([0.5, -1.0, 2.0, 3.5])
    table = np.array([sum(w[i] for i in range(4) if s >> i & 1) for s in range(16)])
    assert np.allclose(backend.shapley_table(table, 4), w, atol=1e-14)


def test_shapley_table_size_check(backend):
    with pytest.raises(ValueError):
        backend.shapley_table(np.zeros(7), 3)


@needs_compiled
def test_backends_agree_bitwise(rng):
    thr = (np.arange(256) + 0.5) / 256
    for _ in range(30):
        m = (rng.random((rng.integers(2, 40), rng.integers(2, 40))) < 0.5).astype(np.uint8)
        assert np.array_equal(compiled.dilate(m, 3), python_backend.dilate(m, 3))
        assert np.array_equal(compiled.erode(m, 5), python_backend.erode(m, 5))
        m2 = (rng.random(m.shape) < 0.3).astype(np.uint8)
        assert compiled.pair_counts(m, m2) == python_backend.pair_counts(m, m2)
        v = rng.beta(0.5, 0.5, size=rng.integers(2, 600))
        assert compiled.otsu_index(v, thr) == python_backend.otsu_index(v, thr)
        n = int(rng.integers(1, 9))
        table = rng.normal(size=1 << n)
        assert np.max(np.abs(compiled.shapley_table(table, n) - python_backend.shapley_table(table, n))) < 1e-12


def test_active_backend_name():
    assert _kernels.BACKEND in ("cython", "python")
    if compiled is not None:
        assert _kernels.BACKEND == "cython"
