import json
from pathlib import Path

import pytest
import yaml

from desamba import __version__
from desamba.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def synth_yaml(tmp_path, tiny_spec):
    p = tmp_path / "spec.yaml"
    p.write_text(yaml.safe_dump(tiny_spec.to_dict()))
    return p


@pytest.fixture
def config_yaml(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump({
        "seed": 0,
        "model": {"num_classes": 2, "input_shape": [8, 16, 16], "stage_depths": [1, 1, 1, 1],
                  "stage_widths": [4, 4, 8, 8], "feature_dim": 8, "tabular_dim": 4,
                  "head_hidden": 8, "dropout": 0.0},
        "train": {"epochs": 1, "batch_size": 3, "val_fraction": 0.0},
    }))
    return p


def test_usage_errors_exit_1(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["train", "only-one-arg"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert "desamba" in capsys.readouterr().err


def test_version_and_help(capsys):
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out
    assert main(["complexity", "--help"]) == EXIT_OK


def test_invalid_inputs_exit_2(tmp_path, capsys):
    assert main(["complexity", str(tmp_path / "missing.yaml")]) == EXIT_INVALID
    bad = tmp_path / "bad.yaml"
    bad.write_text("flags: {FP: true, CE: false}\n")
    assert main(["complexity", str(bad)]) == EXIT_INVALID
    assert "enable_frequency_path" in capsys.readouterr().err
    bad_spec = tmp_path / "spec.yaml"
    bad_spec.write_text("volume_shape: [2, 2, 2]\n")
    assert main(["synth", str(bad_spec), str(tmp_path / "out")]) == EXIT_INVALID
    assert main(["eval", str(tmp_path / "nope.json")]) == EXIT_INVALID


def test_unwritable_output_exits_3(tmp_path, synth_yaml):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["synth", str(synth_yaml), str(blocker / "ds")]) == EXIT_RUNTIME


def test_complexity_command(capsys):
    assert main(["complexity", str(ROOT / "configs" / "micro.yaml")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Params:" in out and "M" in out and "MACs:" in out and "G" in out


def test_end_to_end_synth_train_eval_explain(tmp_path, synth_yaml, config_yaml, capsys):
    ds, run, cam = tmp_path / "ds", tmp_path / "run", tmp_path / "cam"
    assert main(["synth", str(synth_yaml), str(ds), "--seed", "3"]) == EXIT_OK
    assert json.loads((ds / "synth_spec.json").read_text())["seed"] == 3
    assert main(["train", str(config_yaml), str(ds), str(run)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "| internal_test |" in out and "manifest:" in out
    manifest = run / "manifest.json"
    assert main(["eval", str(manifest), "--cohort", "external_test", "--json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["n"] == 2 and report["topk"]["2"] == 100.0
    assert main(["eval", str(manifest), "--cohort", "validation"]) == EXIT_INVALID
    case = sorted(p.name for p in (ds / "internal_test").iterdir())[0]
    assert main(["explain", str(manifest), case, str(cam)]) == EXIT_OK
    assert len(list(cam.glob(f"{case}_z*.png"))) == 8
    assert main(["explain", str(manifest), "missing_case", str(cam)]) == EXIT_INVALID
    assert main(["explain", str(manifest), case, str(cam), "--layer", "nope"]) == EXIT_RUNTIME
