import json

import pytest

from explagree import cli

FAST = """\
n_train = 24
n_eval = 4
epochs = 1
ig_steps = 4
gs_samples = 4
lime_samples = 20
kshap_samples = 20
overlay_images = 1
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "fast.cfg"
    p.write_text(FAST)
    return p


def test_stage_by_stage(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    base = ["--config", str(config_file), "--out", str(out)]
    for cmd in ("gen-data", "train", "attribute", "binarize", "compare", "report"):
        assert cli.main(base + [cmd]) == 0, cmd
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n_map_files"] == 24
    assert "heatmaps" in capsys.readouterr().out


def test_run_and_flags_after_subcommand(tmp_path, config_file):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(config_file), "--out", str(out), "--seed", "3"]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 3


def test_unknown_config_key_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epoch = 3\n")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path), "gen-data"]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_single_method_exits_1(tmp_path, capsys):
    cfgp = tmp_path / "one.cfg"
    cfgp.write_text(FAST + "methods = lime\n")
    assert cli.main(["--config", str(cfgp), "--out", str(tmp_path / "o"), "run"]) == 1
    assert "need ≥2 methods" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path), "train"]) == 2


def test_missing_model_exits_2(tmp_path, config_file):
    assert cli.main(["--config", str(config_file), "--out", str(tmp_path), "attribute"]) == 2


def test_corrupt_image_exits_2(tmp_path, config_file):
    out = tmp_path / "o"
    base = ["--config", str(config_file), "--out", str(out)]
    assert cli.main(base + ["gen-data"]) == 0
    assert cli.main(base + ["train"]) == 0
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"GIF89a")
    assert cli.main(base + ["attribute", "--images", str(bad)]) == 2


def test_subcommand_required():
    with pytest.raises(SystemExit):
        cli.main([])
