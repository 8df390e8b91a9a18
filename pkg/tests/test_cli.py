import json

import pytest

from nll import cli, experiment
from nll.optim import NonFiniteLossError, TrainTrace
from nll.problems import CFLError


def write_config(tmp_path, **fields):
    cfg = {"problem": "f5", "n_train": 40, "n_valid": 20, "n_test": 100, "epochs": 20,
           "data_dir": str(tmp_path / "data")}
    cfg.update(fields)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def pipeline(tmp_path, out, method="new_nll"):
    cfg = write_config(tmp_path)
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "gen")]) == 0
    assert cli.main(["train", "--config", cfg, "--out", str(out), "--method", method]) == 0
    assert cli.main(["evaluate", "--config", cfg, "--out", str(out), "--method", method]) == 0


def test_pipeline_outputs_and_idempotence(tmp_path, capsys):
    pipeline(tmp_path, tmp_path / "a")
    first = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir() if p.name != "run.log"}
    data = {p.name: p.read_bytes() for p in (tmp_path / "data").iterdir()}
    pipeline(tmp_path, tmp_path / "b")
    second = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir() if p.name != "run.log"}
    assert data == {p.name: p.read_bytes() for p in (tmp_path / "data").iterdir()}
    assert set(first) >= {"model.json", "model_best.json", "trace.csv", "metrics.csv", "scatter.csv",
                          "regressor.json", "config.json"}
    first.pop("config.json"), second.pop("config.json")  # records its own out dir
    assert first == second
    trace = (tmp_path / "a" / "trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,train_loss,valid_loss,train_rel_pct,valid_rel_pct"
    assert trace[1].startswith("0,") and ",100.0,100.0" in trace[1]
    assert "New NLL,40," in capsys.readouterr().out


def test_active_subspace_pipeline(tmp_path):
    pipeline(tmp_path, tmp_path / "as", method="as")
    assert not (tmp_path / "as" / "trace.csv").exists()
    assert (tmp_path / "as" / "metrics.csv").read_text().splitlines()[1].startswith("AS 1-D,40,")


def test_seed_flag_changes_data(tmp_path):
    cfg = write_config(tmp_path, data_dir=None)
    cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "s0"), "--seed", "0"])
    cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "s1"), "--seed", "1"])
    a = (tmp_path / "s0" / "data" / "train.csv").read_bytes()
    b = (tmp_path / "s1" / "data" / "train.csv").read_bytes()
    assert a != b


def test_burgers_generate_spot_checks_gradients(tmp_path, capsys):
    cfg = write_config(tmp_path, problem="burgers_K", n_train=20, n_valid=0, n_test=2, data_dir=None)
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "k")]) == 0
    assert "gradient spot check" in capsys.readouterr().out
    assert len((tmp_path / "k" / "data" / "train.csv").read_text().splitlines()) == 21


def test_validation_failures_exit_1(tmp_path):
    assert cli.main(["train", "--method", "bogus"]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"problem": "f5", "layerz": 3}))
    assert cli.main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert cli.main(["generate", "--problem", "r0", "--out", str(tmp_path)]) == 1
    # evaluate before train
    cfg = write_config(tmp_path)
    assert cli.main(["evaluate", "--config", cfg, "--out", str(tmp_path / "none")]) == 1


def test_numerical_aborts_exit_2(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "gen")]) == 0

    def diverge(*args, **kwargs):
        raise NonFiniteLossError("loss is nan at epoch 3", TrainTrace())

    monkeypatch.setattr(experiment, "fit_reduction", diverge)
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 2
    assert (tmp_path / "t" / "trace.csv").exists()

    def unstable(*args, **kwargs):
        raise CFLError("time step violates the CFL bound")

    monkeypatch.setattr(experiment, "generate", unstable)
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "g")]) == 2


def test_reproduce_dry_run(capsys):
    assert cli.main(["reproduce", "table1", "--dry-run"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 18
    assert lines[0].split()[:2] == ["f4", "new_nll"]
    assert cli.main(["reproduce", "table2", "--dry-run", "--samples", "20"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 8


def test_reproduce_tiny_table(tmp_path, capsys):
    cfg = tmp_path / "base.json"
    cfg.write_text(json.dumps({"n_valid": 0, "n_test": 50}))
    rc = cli.main(["reproduce", "table1", "--samples", "12", "--epochs", "3", "--config", str(cfg),
                   "--out", str(tmp_path)])
    assert rc == 0
    wide = (tmp_path / "table1.csv").read_text().splitlines()
    assert len(wide) == 7
    assert (tmp_path / "table1_bands.csv").exists()
    assert "outside the reference band" in capsys.readouterr().out


def test_check_gradients_passes(capsys):
    assert cli.main(["check-gradients", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "FAILED" not in out and out.count("ok") == 6


@pytest.mark.parametrize("flag", ["--help"])
def test_help_exits_zero(flag, capsys):
    assert cli.main([flag]) == 0
    assert "generate" in capsys.readouterr().out
