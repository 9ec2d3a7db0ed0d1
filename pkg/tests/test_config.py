import pytest

from explagree.attribution import METHODS
from explagree.config import ConfigError, PipelineConfig, format_config, load_config, parse_config


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.methods == METHODS
    assert (cfg.n_train, cfg.n_eval, cfg.epochs, cfg.learning_rate, cfg.batch_size) == (600, 50, 30, 0.01, 16)
    assert cfg.vit_config().n_tokens == 17
    assert cfg.binarize_config().closing_applies_to == frozenset({"pixel"})


def test_parse_types_and_comments():
    cfg = parse_config("""
        # a comment
        seed = 7
        learning_rate = 0.5   # trailing comment
        methods = lime, kernel_shap
        threshold_mode = percentile
        closing_applies_to = pixel,segment
    """)
    assert cfg.seed == 7 and cfg.learning_rate == 0.5
    assert cfg.methods == ("lime", "kernel_shap")
    assert cfg.closing_applies_to == ("pixel", "segment")


@pytest.mark.parametrize("text, message", [
    ("sede = 3", "unknown key"),
    ("seed = 1\nseed = 2", "duplicate"),
    ("seed 3", "key = value"),
    ("seed = three", "integer"),
    ("gs_sigma = x", "number"),
])
def test_parse_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


@pytest.mark.parametrize("changes", [
    dict(methods=()), dict(methods=("lime", "occlusion")), dict(methods=("lime", "lime")),
    dict(target_policy="random"), dict(ig_steps=0), dict(grid_side=5), dict(lime_samples=10),
    dict(kshap_samples=10), dict(momentum=1.0), dict(percentile=1.0), dict(closing_kernel=2),
    dict(threshold_mode="kmeans"), dict(patch_size=7), dict(lime_kernel_width=0.0), dict(gs_sigma=-1.0),
])
def test_validation(changes):
    with pytest.raises(ConfigError):
        PipelineConfig(**changes)


def test_format_round_trip(tmp_path):
    cfg = PipelineConfig(seed=9, methods=("lime", "integrated_gradients"), percentile=0.3)
    p = tmp_path / "c.cfg"
    p.write_text(format_config(cfg))
    assert load_config(p) == cfg


def test_snapshot_is_json_ready():
    snap = PipelineConfig().snapshot()
    assert snap["methods"] == list(METHODS)
    assert snap["closing_applies_to"] == ["pixel"]
