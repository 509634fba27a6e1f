import json

import numpy as np
import pytest

from vigil import __version__
from vigil.main import main
from vigil.nn import VARIANTS
from vigil.tooling import RANGE_SIGNED, RANGE_UNIT, read_clp1, read_sclw


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    """Run every command from an empty directory so logs and runs land in tmp."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def tiny_train_file(workdir, tiny_cfg):
    path = workdir / "tiny.json"
    path.write_text(json.dumps({
        "model": tiny_cfg.model_dump(mode="json"),
        "preproc": {"n_frames": 4, "resize_to": 20, "crop_to": 16},
        "batch_size": 2,
        "base_lr": 0.002,
        "lr_floor": 0.0002,
    }))
    return path


def _error_line(capsys) -> str:
    return capsys.readouterr().err.strip().splitlines()[-1]


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert f"vigil {__version__}" in out
    assert "SCLW v1" in out and "CLP1 v1" in out


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert _error_line(capsys).startswith("error: usage:")


def test_missing_required_flag(capsys):
    assert main(["synth", "--n", "2"]) == 2
    assert "--out" in _error_line(capsys)


def test_params_for_named_variant(capsys):
    assert main(["params", "--config", "sepconvlstm_m"]) == 0
    out = capsys.readouterr().out
    assert "332,545" in out
    assert "cell.frames" in out


def test_params_flops_table(capsys):
    assert main(["params", "--config", "convlstm_m", "--flops", "--convention", "mac1"]) == 0
    assert "convention mac1" in capsys.readouterr().out


def test_params_compare_lists_every_variant(capsys):
    assert main(["params", "--compare"]) == 0
    out = capsys.readouterr().out
    for name in VARIANTS:
        assert name in out


def test_params_cost(capsys):
    assert main(["params", "--cost", "224,224,56,64,3"]) == 0
    assert "ratio" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["params", "--cost", "224,224"], ["params"]])
def test_params_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert _error_line(capsys).startswith("error: usage:")


def test_params_unknown_config(capsys):
    assert main(["params", "--config", "nope.json"]) == 1
    assert _error_line(capsys).startswith("error: config:")


def test_explicit_missing_settings_file(capsys):
    assert main(["--settings", "absent.yaml", "params", "--compare"]) == 1
    assert _error_line(capsys).startswith("error: config:")


def test_invalid_settings_yaml(workdir, capsys):
    (workdir / "bad.yaml").write_text("logging: [unclosed\n")
    assert main(["--settings", "bad.yaml", "params", "--compare"]) == 1
    assert "invalid YAML" in _error_line(capsys)


def test_settings_paths_are_used(workdir, capsys):
    (workdir / "s.yaml").write_text("paths:\n  log_dir: ./mylogs\n")
    assert main(["--settings", "s.yaml", "params", "--cost", "8,8,4,4,3"]) == 0
    assert (workdir / "mylogs").is_dir()


def test_synth_then_preprocess(workdir, capsys):
    assert main(["synth", "--out", "data", "--n", "2", "--frames", "3", "--size", "8"]) == 0
    assert "wrote 2 clips" in capsys.readouterr().out
    clip_dir = next((workdir / "data" / "violent").iterdir())

    assert main(["preprocess", "--in", str(clip_dir), "--out", "d.clp1", "--mode", "diff"]) == 0
    diff, tag = read_clp1(workdir / "d.clp1")
    assert tag == RANGE_SIGNED and diff.shape == (2, 8, 8, 3)

    assert main(["preprocess", "--in", str(clip_dir), "--out", "b.clp1", "--mode", "bsf"]) == 0
    bsf, tag = read_clp1(workdir / "b.clp1")
    assert tag == RANGE_UNIT and bsf.shape == (3, 8, 8, 3)
    assert np.all(bsf >= 0)


def test_preprocess_missing_clip(capsys):
    assert main(["preprocess", "--in", "nowhere.clp1", "--out", "x.clp1", "--mode", "bsf"]) == 1
    assert _error_line(capsys).startswith("error: io:")


def test_predict_missing_weights(workdir, capsys):
    main(["synth", "--out", "data", "--n", "2", "--frames", "3", "--size", "8"])
    clip_dir = next((workdir / "data" / "violent").iterdir())
    assert main(["predict", "--clip", str(clip_dir), "--weights", "absent.sclw", "--config", "tiny_m"]) == 1
    assert _error_line(capsys).startswith("error: io:")


def test_train_eval_predict(workdir, tiny_train_file, capsys):
    assert main(["synth", "--out", "data", "--n", "4", "--frames", "6", "--size", "24"]) == 0
    argv = ["train", "--data", "data", "--config", str(tiny_train_file), "--epochs", "1",
            "--seed", "3", "--out-weights", "w.sclw", "--deterministic"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "epochs=1" in out
    weights = read_sclw(workdir / "w.sclw")
    assert "head.dense1.bias" in weights
    log_lines = (workdir / "runs" / "train_seed3.jsonl").read_text().splitlines()
    assert json.loads(log_lines[0])["epoch"] == 0

    assert main(["eval", "--data", "data", "--weights", "w.sclw", "--config", str(tiny_train_file)]) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("accuracy=") and out.endswith("clips=4")

    clip_dir = next((workdir / "data" / "violent").iterdir())
    assert main(["predict", "--clip", str(clip_dir), "--weights", "w.sclw", "--config", str(tiny_train_file)]) == 0
    label, p = capsys.readouterr().out.split()
    assert label in ("violent", "nonviolent")
    assert 0.0 < float(p.removeprefix("p=")) < 1.0


def test_deterministic_training_writes_identical_weights(workdir, tiny_train_file):
    assert main(["synth", "--out", "data", "--n", "4", "--frames", "6", "--size", "24"]) == 0
    for out in ("w1.sclw", "w2.sclw"):
        argv = ["train", "--data", "data", "--config", str(tiny_train_file), "--epochs", "2",
                "--seed", "5", "--out-weights", out, "--deterministic"]
        assert main(argv) == 0
    assert (workdir / "w1.sclw").read_bytes() == (workdir / "w2.sclw").read_bytes()


def test_eval_with_mismatched_weights(workdir, tiny_train_file, capsys):
    from vigil.tooling import write_sclw

    main(["synth", "--out", "data", "--n", "2", "--frames", "6", "--size", "24"])
    write_sclw(workdir / "w.sclw", {"unrelated": np.zeros(3)})
    assert main(["eval", "--data", "data", "--weights", "w.sclw", "--config", str(tiny_train_file)]) == 1
    assert _error_line(capsys).startswith("error: shape:")


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "conv2d/" in out
    assert out.strip().splitlines()[-1].startswith("all ")
