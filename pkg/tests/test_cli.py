import re

import numpy as np
import pytest
import tomli

from npswab import cli
from npswab.config import RunConfig
from npswab.loadcell import CalibrationModel


def run(*argv):
    return cli.main([str(a) for a in argv])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def write_cfg(path, text):
    path.write_text(text)
    return path


def test_calibrate_prints_r2(tmp_path, capsys):
    assert run("calibrate", "--out", tmp_path) == cli.EXIT_OK
    out = capsys.readouterr().out
    r2 = [float(m) for m in re.findall(r"^[xyz]\s+(\S+)", out, re.M)]
    assert len(r2) == 3 and all(v > 0.9999 for v in r2)
    model = CalibrationModel.load(tmp_path / "calibration.toml")
    assert np.allclose(model.r2, r2)


def test_calibrate_noise_free(tmp_path):
    assert run("calibrate", "--noise-free", "--out", tmp_path) == cli.EXIT_OK
    model = CalibrationModel.load(tmp_path / "calibration.toml")
    assert np.all(np.abs(model.r2 - 1.0) <= 1e-12)
    truth = RunConfig.load().truth_model()
    assert np.max(np.abs(model.A - truth.A)) <= 1e-9


def test_calibrate_single_orientation_fails(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.toml", "[sensor]\ncalibration_tilt_deg = 0.0\n")
    assert run("calibrate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_DEGENERATE
    assert "rank-deficient" in capsys.readouterr().err


def test_trial_nominal(tmp_path, capsys):
    assert run("trial", "--mode", "feedback", "--out", tmp_path) == cli.EXIT_OK
    assert "SUCCESS" in capsys.readouterr().out
    for name in ("config.toml", "trial.csv", "trial.toml", "trial.svg"):
        assert (tmp_path / name).is_file()
    with open(tmp_path / "trial.toml", "rb") as fh:
        assert tomli.load(fh)["outcome"] == "SUCCESS"


def test_trial_is_byte_identical(tmp_path):
    args = ("trial", "--mode", "baseline", "--rpy", 1, -2, 3, "--shift", 0.5, 1, -1,
            "--seed", 4)
    assert run(*args, "--out", tmp_path / "a") == cli.EXIT_OK
    assert run(*args, "--out", tmp_path / "b") == cli.EXIT_OK
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_trial_diverged_exit_code(tmp_path):
    cfg = write_cfg(tmp_path / "c.toml", "[engine]\nqd_limit = 0.05\n")
    assert run("trial", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_DIVERGED
    assert (tmp_path / "o" / "trial.csv").is_file()


def test_trial_unreachable(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.toml", "[planner]\nstart = [1.4, 0.0, 0.45]\n")
    assert run("trial", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_UNREACHABLE
    assert "waypoint" in capsys.readouterr().err


def test_bad_config_exit(tmp_path):
    cfg = write_cfg(tmp_path / "c.toml", "[filter]\nalfa = 2\n")
    assert run("trial", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_CONFIG


SMOKE = "[plan]\npairs = 2\nlog_stride = 100\n"


def test_experiment_smoke_and_determinism(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.toml", SMOKE)
    assert run("experiment", "--config", cfg, "--jobs", 2, "--out", tmp_path / "a") == 0
    assert "Success (contingency)" in capsys.readouterr().out
    assert run("experiment", "--config", cfg, "--jobs", 1, "--out", tmp_path / "b") == 0
    a = tree_bytes(tmp_path / "a")
    assert a == tree_bytes(tmp_path / "b")
    for name in ("config.toml", "summary.txt", "pairs.csv", "trials.csv",
                 "trials/pair000_feedback.csv", "plots/pair001.svg"):
        assert name in a
    # the frozen config reloads to the resolved tree
    frozen = RunConfig.load(tmp_path / "a" / "config.toml")
    assert frozen.tree == RunConfig.load(cfg).tree


def test_experiment_exit_zero_with_failures(tmp_path):
    cfg = write_cfg(tmp_path / "c.toml", SMOKE + "[engine]\ntimeout = 1.0\n")
    assert run("experiment", "--config", cfg, "--jobs", 1, "--out", tmp_path / "o") == 0
    text = (tmp_path / "o" / "trials.csv").read_text()
    assert "SUCCESS" not in text


def test_seed_changes_plan(tmp_path):
    cfg = write_cfg(tmp_path / "c.toml", "[plan]\npairs = 1\nlog_stride = 500\n")
    run("experiment", "--config", cfg, "--jobs", 1, "--seed", 1, "--out", tmp_path / "a")
    run("experiment", "--config", cfg, "--jobs", 1, "--seed", 2, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "pairs.csv").read_text() != (tmp_path / "b" / "pairs.csv").read_text()


def curves(svg):
    return len(re.findall(r"alpha = [0-9.]+", svg))


def test_figures(tmp_path):
    assert run("figures", "--out", tmp_path / "a") == cli.EXIT_OK
    assert curves((tmp_path / "a" / "step_response.svg").read_text()) == 3
    assert (tmp_path / "a" / "sigmoids.svg").is_file()
    assert run("figures", "--alpha", 1, "--out", tmp_path / "b") == cli.EXIT_OK
    assert curves((tmp_path / "b" / "step_response.svg").read_text()) == 1
    assert run("figures", "--out", tmp_path / "c") == cli.EXIT_OK
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "c")


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])
