import time

import numpy as np
import pytest

from nll import experiment, regression, tables
from nll.experiment import ConfigError, ExperimentConfig, Fitted
from nll.problems import DomainBox, SampleSet


@pytest.fixture(scope="module")
def f5_small():
    cfg = ExperimentConfig.for_problem("f5", n_train=100, n_valid=50, n_test=400, epochs=100, seed=1)
    return cfg, experiment.generate(cfg)


def test_presets_and_labels():
    cfg = ExperimentConfig.for_problem("f4")
    assert cfg.layers == 30 and cfg.regressor == "mlp"
    assert cfg.learning_rate() == 0.003
    assert ExperimentConfig.for_problem("f4", method="old_nll_tilde").learning_rate() == 0.02
    assert ExperimentConfig.for_problem("burgers_K").layers == 7
    assert ExperimentConfig.for_problem("burgers_K").n_test == 500
    assert ExperimentConfig(method="as", active=2).label() == "AS 2-D"
    assert ExperimentConfig(method="old_nll_tilde", active=2).label() == "Old NLL 2"
    assert ExperimentConfig().train_config().optimizer == "adam"
    assert ExperimentConfig(method="old_nll_hat").train_config().optimizer == "sgd"


def test_r0_as_regressor_is_global_quartic():
    box = [[1, 2]] * 8
    assert ExperimentConfig.for_problem("r0", method="as", box=box).regressor_spec() == ("global_poly", {"degree": 4})
    assert ExperimentConfig.for_problem("r0", box=box).regressor_spec()[0] == "local_poly"


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"problem": "f5", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(problem="r0").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(method="sgd").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(epochs=0).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_config_round_trip():
    cfg = ExperimentConfig.for_problem("burgers_K", seed=4)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_generate_is_reproducible_and_splits_differ(f5_small, tmp_path):
    cfg, sets = f5_small
    again = experiment.generate(cfg)
    for split in experiment.SPLITS:
        assert np.array_equal(sets[split].x, again[split].x)
    assert not np.array_equal(sets["train"].x[:50], sets["valid"].x[:50])
    a = experiment.save_data(sets, tmp_path / "a")
    b = experiment.save_data(again, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    loaded = experiment.load_data(tmp_path / "a")
    assert np.array_equal(loaded["test"].grad, sets["test"].grad)


@pytest.mark.parametrize("method,active", [("new_nll", 1), ("old_nll_hat", 1), ("old_nll_tilde", 2), ("as", 1)])
def test_smoke_each_method(f5_small, method, active):
    cfg, sets = f5_small
    cfg = ExperimentConfig.for_problem("f5", method=method, active=active, n_train=100, n_valid=50,
                                       n_test=400, epochs=100, seed=1)
    fitted, ev = experiment.run(cfg, sets)
    row = ev.row
    assert row["samples"] == 100 and row["method"] == cfg.label()
    assert 0.0 <= row["z_A_sens_pct"] <= 100.0
    assert np.isfinite(row["rrmse_pct"])
    assert ev.scatter.shape == (400, active + 2)
    if method != "as":
        assert fitted.trace.train_rel_pct[0] == 100.0
        assert fitted.trace.epoch[-1] == 100


def test_new_nll_beats_old_after_short_training(f5_small):
    cfg, sets = f5_small
    new = experiment.run(cfg, sets)[1].row
    old = experiment.run(ExperimentConfig.for_problem("f5", method="old_nll_tilde", n_train=100, n_valid=50,
                                                      n_test=400, epochs=100, seed=1), sets)[1].row
    assert new["z_A_sens_pct"] > old["z_A_sens_pct"]


def test_active_subspace_is_fast():
    cfg = ExperimentConfig.for_problem("f4", method="as", n_train=20, n_valid=0, n_test=10)
    sets = experiment.generate(cfg)
    t = time.perf_counter()
    experiment.fit_reduction(cfg, sets["train"], None)
    assert time.perf_counter() - t < 1.0


def test_identity_transform_on_linear_coordinate(f5_small):
    _, sets = f5_small
    # regress the first normalized coordinate on itself
    train, test = (SampleSet(s.x, s.xn[:, 0], s.grad, s.box) for s in (sets["train"], sets["test"]))
    ev = experiment.evaluate(None, train, test, regression.GlobalPoly(1))
    assert ev.row["rrmse_pct"] < 1e-10


def test_oracle_regressor_gives_zero_error(f5_small):
    _, sets = f5_small

    class Oracle:
        def fit(self, z, y):
            return self

        def predict(self, z):
            return sets["test"].f

    ev = experiment.evaluate(None, sets["train"], sets["test"], Oracle())
    assert ev.row["rrmse_pct"] == 0.0 and ev.row["rl1_pct"] == 0.0 and ev.row["rl2_pct"] == 0.0


def test_fitted_round_trip(f5_small):
    cfg, sets = f5_small
    fitted = experiment.fit_reduction(ExperimentConfig.for_problem("f5", epochs=5), sets["train"], None)
    back = Fitted.from_dict(fitted.to_dict())
    xn = sets["test"].xn[:5]
    assert np.array_equal(back.active_coords(xn), fitted.active_coords(xn))
    as_fit = experiment.fit_reduction(ExperimentConfig(method="as", active=2), sets["train"], None)
    assert np.array_equal(Fitted.from_dict(as_fit.to_dict()).latent(xn), as_fit.latent(xn))


def test_odd_dimension_is_padded():
    cfg = ExperimentConfig(problem="f5", epochs=3, n_train=10, n_valid=0, n_test=10)
    sets = experiment.generate(cfg)
    s = sets["train"]
    s3 = SampleSet(s.x[:, :3], s.f, s.grad[:, :3], DomainBox(s.box.lower[:3], s.box.upper[:3]))
    fitted = experiment.fit_reduction(cfg, s3, None)
    assert fitted.transform.n == 4
    assert fitted.active_coords(s3.xn).shape == (10, 1)


def test_csv_helpers():
    rows = [{"method": "New NLL", "samples": 10, "z_A_sens_pct": 90.0, "rrmse_pct": 1.0,
             "rl1_pct": 2.0, "rl2_pct": 3.0}]
    text = experiment.rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(experiment.ROW_FIELDS)
    assert text.splitlines()[1] == "New NLL,10,90.0,1.0,2.0,3.0"
    assert experiment.scatter_to_csv(np.array([[0.5, 1.0, 1.5]]), 1) == "z1,f_true,f_pred\n0.5,1.0,1.5\n"


# -- tables --------------------------------------------------------------------

def test_plan_grids():
    t1 = tables.plan("table1")
    assert len(t1) == 6 * 3
    assert {j.samples for j in t1} == {100, 500, 2500}
    t2 = tables.plan("table2", samples=[20])
    assert len(t2) == 8 and all(j.samples == 20 for j in t2)
    with pytest.raises(ConfigError):
        tables.plan("table3")


def test_band_check():
    assert tables.band_check("f5", "New NLL", 500, 88.6, 0.370) == ("ok", "")
    status, detail = tables.band_check("f5", "New NLL", 500, 70.0, 2.0)
    assert status == "flag" and "sens" in detail and "rrmse" in detail
    assert tables.band_check("r0", "New NLL", 20, 50.0, 1.0)[0] == "n/a"


def test_property_checks_only_for_unreferenced_problems():
    rows = [
        {"problem": "r0", "method": "New NLL", "samples": 20, "z_A_sens_pct": 90.0},
        {"problem": "r0", "method": "AS 1-D", "samples": 20, "z_A_sens_pct": 60.0},
        {"problem": "f4", "method": "New NLL", "samples": 50, "z_A_sens_pct": 10.0},
        {"problem": "f4", "method": "AS 1-D", "samples": 50, "z_A_sens_pct": 60.0},
    ]
    out = tables.property_checks(rows)
    assert len(out) == 1 and out[0]["problem"] == "r0" and out[0]["status"] == "ok"


def test_reproduce_skips_r0_without_box():
    rows = tables.reproduce("table2", {"epochs": 3, "n_valid": 0, "n_test": 10}, samples=[8])
    skipped = [r for r in rows if r["status"] == "skipped"]
    assert len(skipped) == 4 and all(r["problem"] == "r0" for r in skipped)
    assert len([r for r in rows if r["problem"] == "burgers_K" and "rrmse_pct" in r]) == 4


def test_reproduce_small_grid():
    rows = tables.reproduce("table1", {"epochs": 3, "n_valid": 0, "n_test": 50}, samples=[12])
    assert len([r for r in rows if "rrmse_pct" in r]) == 6
    wide = tables.wide_csv(rows, "table1").splitlines()
    assert wide[0].startswith("function,method,12_z_A_sens_pct")
    assert len(wide) == 7
    assert tables.long_csv(rows).splitlines()[0] == ",".join(tables.LONG_FIELDS)
