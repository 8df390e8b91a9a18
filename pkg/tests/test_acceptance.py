"""End-to-end acceptance checks, one test per criterion.

The reproduction runs (criteria 5 to 8) train full 5000-epoch networks and
take a long time on one core; their results are shared through
session-scoped fixtures. A summary line per criterion is printed at the end
of the session (see conftest.py).
"""
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nll import activesub, experiment, metrics, revnet
from nll.experiment import ExperimentConfig
from nll.loss import Batch, LossSpec, loss_and_gradient, loss_value
from nll.optim import TrainConfig, train
from nll.problems import (
    BurgersGrid,
    DomainBox,
    burgers_solve,
    f4_eval_grad,
    f5_eval_grad,
    kinetic_energy_and_grad,
    r0_eval_grad,
)

# an admissible parameter box for R0 (all denominators stay positive)
R0_BOX = [[0.1, 0.5], [0.1, 0.5], [0.1, 0.5], [0.1, 0.9], [0.05, 0.5], [0.05, 0.5], [0.05, 0.5], [0.05, 0.5]]


def random_params(rng, n, L, scale=0.5):
    p = revnet.init_params(n, L, seed=int(rng.integers(1 << 30)), scale=scale)
    for a in p.arrays.values():
        a += rng.normal(0, 0.2, a.shape)
    return p


def rel_err(approx, exact):
    return np.linalg.norm(np.ravel(approx) - np.ravel(exact)) / max(np.linalg.norm(np.ravel(exact)), 1e-300)


def central_fd(fun, y, eps=1e-6):
    y = np.asarray(y, dtype=float)
    cols = []
    for i in range(y.size):
        h = eps * max(1.0, abs(y[i]))
        e = np.zeros_like(y)
        e[i] = h
        cols.append((np.asarray(fun(y + e)) - np.asarray(fun(y - e))) / (2 * h))
    return np.stack(cols, axis=-1)


# -- 1. invertibility ------------------------------------------------------------

def test_criterion_01_invertibility(record_property):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    combos = [(n, L) for n in (2, 8, 20, 40) for L in (1, 7, 15, 30)]
    for case in range(1000):
        n, L = combos[case % len(combos)]
        p = random_params(rng, n, L)
        x = rng.normal(0, 2, n)
        worst = max(worst, np.max(np.abs(revnet.inverse(p, revnet.forward(p, x)) - x)))
    elapsed = time.perf_counter() - t0
    record_property("measured", f"max error {worst:.1e}, {elapsed:.1f}s")
    assert worst <= 1e-8
    assert elapsed < 10


# -- 2. derivative oracles -----------------------------------------------------------

def test_criterion_02_derivative_oracles(record_property):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(50):
        n, L = int(rng.choice([2, 4, 6])), int(rng.integers(1, 6))
        p = random_params(rng, n, L)
        z, w = rng.normal(size=n), rng.normal(size=n)
        fd_J = central_fd(lambda y: revnet.inverse(p, y), z)
        note("inverse_jacobian", rel_err(revnet.inverse_jacobian(p, z), fd_J))
        note("inverse_vjp", rel_err(revnet.inverse_vjp(p, z, w), w @ fd_J))

    # losses: norm-wise relative error over the whole parameter vector
    for kind in ("new", "old_hat", "old_tilde"):
        for _ in range(50):
            n, L = int(rng.choice([2, 4])), int(rng.integers(1, 4))
            p = random_params(rng, n, L, scale=0.4)
            batch = Batch(rng.uniform(-1, 1, (4, n)), rng.normal(size=(4, n)))
            spec = LossSpec(kind)
            _, grads = loss_and_gradient(p, batch, spec)
            exact, fd = [], []
            for name, A in p.arrays.items():
                for idx in np.ndindex(A.shape):
                    orig = A[idx]
                    A[idx] = orig + 1e-5
                    up = loss_value(p, batch, spec)
                    A[idx] = orig - 1e-5
                    down = loss_value(p, batch, spec)
                    A[idx] = orig
                    fd.append((up - down) / 2e-5)
                    exact.append(grads[name][idx])
            note(f"loss {kind}", rel_err(exact, fd))

    boxes = {"f4": (f4_eval_grad, DomainBox.cube(40)), "f5": (f5_eval_grad, DomainBox.cube(20)),
             "r0": (r0_eval_grad, DomainBox.from_pairs(R0_BOX))}
    for name, (fun, box) in boxes.items():
        for _ in range(50):
            x = rng.uniform(box.lo, box.hi)
            note(f"{name} gradient", rel_err(fun(x)[1], central_fd(lambda y: fun(y)[0], x)))

    elapsed = time.perf_counter() - t0
    record_property("measured", ", ".join(f"{k} {v:.0e}" for k, v in worst.items()) + f", {elapsed:.0f}s")
    for name, err in worst.items():
        assert err <= (1e-4 if name.startswith("loss") else 1e-6), name
    assert elapsed < 60


# -- 3. Burgers constant state ---------------------------------------------------------

def test_criterion_03_burgers_constant_state(record_property):
    t0 = time.perf_counter()
    for mu2 in (3.0, 5.5, 8.0):
        w = burgers_solve([1.0, mu2, 0.0], BurgersGrid(t_max=25.0))
        assert np.all(w == 1.0)
    K, _ = kinetic_energy_and_grad([1.0, 4.0, 0.0], 25.0)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"K(25) = {K!r}, {elapsed:.2f}s")
    assert abs(K - 1250.0) <= 1e-6
    assert elapsed < 5


# -- 4. active subspace exactness ----------------------------------------------------------

def _angle(u, v):
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    return np.arcsin(min(1.0, np.linalg.norm(v - (u @ v) * u)))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_criterion_04_active_subspace_exactness(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n) * 10.0 ** rng.uniform(-3, 3)
    xs = rng.uniform(-1, 1, (10, n))
    grads = np.tile(a, (10, 1))
    model = activesub.fit(grads, k=1)
    assert _angle(model.W_active[:, 0], a) <= 1e-8
    assert metrics.coordinate_sensitivities(model, xs, grads).active() == pytest.approx(100.0, abs=1e-9)


# -- shared reproduction runs --------------------------------------------------------------

class Runs:
    """Lazily trains and caches one (problem, method) cell on shared data."""

    def __init__(self):
        self.sets, self.results = {}, {}

    def data(self, problem, n_train):
        if problem not in self.sets:
            self.sets[problem] = experiment.generate(ExperimentConfig.for_problem(problem, n_train=n_train))
        return self.sets[problem]

    def get(self, problem, method, n_train, active=1):
        key = (problem, method, active)
        if key not in self.results:
            cfg = ExperimentConfig.for_problem(problem, method=method, active=active, n_train=n_train)
            self.results[key] = experiment.run(cfg, self.data(problem, n_train))
        return self.results[key]


@pytest.fixture(scope="session")
def runs():
    return Runs()


def rel_at(trace, epoch):
    return trace.train_rel_pct[trace.epoch.index(epoch)]


# -- 5. f5 ------------------------------------------------------------------------------------

def test_criterion_05_f5_reproduction(runs, record_property):
    cfg = ExperimentConfig.for_problem("f5")
    assert (cfg.layers, cfg.tau, cfg.epochs, cfg.n_test) == (30, 0.25, 5000, 10000)
    assert cfg.learning_rate() == 0.003 and cfg.regressor_spec() == ("local_poly", {"degree": 2, "k": 10})
    _, ev = runs.get("f5", "new_nll", 500)
    sens, err = ev.row["z_A_sens_pct"], ev.row["rrmse_pct"]
    record_property("measured", f"sens {sens:.1f}%, RRMSE {err:.3f}%")
    assert sens >= 80.0
    assert err <= 1.5


# -- 6. f4 ------------------------------------------------------------------------------------

def test_criterion_06_f4_reproduction(runs, record_property):
    new = runs.get("f4", "new_nll", 500)[1].row
    olds = {m: runs.get("f4", m, 500)[1].row for m in ("old_nll_tilde", "old_nll_hat")}
    record_property("measured", f"New sens {new['z_A_sens_pct']:.1f}% RRMSE {new['rrmse_pct']:.2f}%; " + "; ".join(
        f"{m} sens {r['z_A_sens_pct']:.1f}% RRMSE {r['rrmse_pct']:.2f}%" for m, r in olds.items()))
    assert new["z_A_sens_pct"] >= 80.0
    assert new["rrmse_pct"] <= 4.0
    for m, old in olds.items():
        assert old["z_A_sens_pct"] < new["z_A_sens_pct"], m
        assert old["rrmse_pct"] > new["rrmse_pct"], m


# -- 7. Burgers kinetic energy -------------------------------------------------------------------

def test_criterion_07_burgers_reproduction(runs, record_property):
    assert ExperimentConfig.for_problem("burgers_K").layers == 7
    new = runs.get("burgers_K", "new_nll", 100)[1].row
    as1 = runs.get("burgers_K", "as", 100)[1].row
    record_property("measured", f"sens {new['z_A_sens_pct']:.1f}%, RRMSE {new['rrmse_pct']:.3f}%, "
                                f"AS 1-D RRMSE {as1['rrmse_pct']:.2f}%")
    assert new["z_A_sens_pct"] >= 90.0
    assert new["rrmse_pct"] <= 1.0
    assert as1["rrmse_pct"] >= 3.0 * new["rrmse_pct"]


# -- 8. training dynamics ------------------------------------------------------------------------

def test_criterion_08_training_dynamics(runs, record_property):
    notes = []
    for problem, olds in (("f5", ("old_nll_tilde",)), ("f4", ("old_nll_tilde", "old_nll_hat"))):
        new_trace = runs.get(problem, "new_nll", 500)[0].trace
        new_2500 = rel_at(new_trace, 2500)
        new_final = max(new_2500, new_trace.train_rel_pct[-1])
        notes.append(f"{problem} New {new_2500:.3g}%")
        assert new_2500 < 10.0, problem
        for m in olds:
            old_2500 = rel_at(runs.get(problem, m, 500)[0].trace, 2500)
            notes.append(f"{problem} {m} {old_2500:.3g}%")
            assert old_2500 > new_final, (problem, m)
    record_property("measured", "relative loss at epoch 2500: " + ", ".join(notes))


# -- 9. zero fixed point ---------------------------------------------------------------------------

def test_criterion_09_zero_fixed_point(record_property):
    rng = np.random.default_rng(3)
    xs = rng.uniform(-1, 1, (30, 6))
    grads = np.zeros_like(xs)
    grads[:, 0] = 1.0  # f(x) = x1
    p = revnet.init_params(6, 5, scale=0.0)
    assert loss_value(p, Batch(xs, grads), LossSpec()) == 0.0
    cfg = TrainConfig(epochs=5000, lr=0.003, log_every=1, validation_size=0)
    p, trace, _ = train(p, Batch(xs, grads), None, cfg)
    record_property("measured", f"{len(trace.epoch)} logged epochs, max loss {max(trace.train_loss)}")
    assert all(v == 0.0 for v in trace.train_loss)
    assert all(not a.any() for a in p.arrays.values())


# -- 10. R0 ------------------------------------------------------------------------------------------

def test_criterion_10_r0(record_property):
    rng = np.random.default_rng(4)
    box = DomainBox.from_pairs(R0_BOX)
    theta = np.array([0.2, 0.3, 0.4, 0.5, 0.1, 0.2, 0.25, 0.15])
    b1, b2, b3, rho1, g1, g2, om, psi = theta
    expected = (b1 + b2 * rho1 * g1 / om + b3 * psi / g2) / (g1 + psi)
    assert r0_eval_grad(theta)[0] == pytest.approx(expected, rel=1e-14)
    for _ in range(20):
        x = rng.uniform(box.lo, box.hi)
        assert rel_err(r0_eval_grad(x)[1], central_fd(lambda y: r0_eval_grad(y)[0], x)) <= 1e-6

    # property substitute for the table: New NLL concentrates more than 1-D AS
    narrow = [[0.5 * (lo + hi) - 0.1 * (hi - lo), 0.5 * (lo + hi) + 0.1 * (hi - lo)] for lo, hi in R0_BOX]
    notes = []
    for name, pairs in (("wide", R0_BOX), ("narrow", narrow)):
        cfg = ExperimentConfig.for_problem("r0", box=pairs, n_train=100, n_test=2000)
        sets = experiment.generate(cfg)
        new = experiment.run(cfg, sets)[1].row
        as1 = experiment.run(ExperimentConfig.for_problem("r0", box=pairs, method="as", n_train=100,
                                                          n_test=2000), sets)[1].row
        notes.append(f"{name} box New {new['z_A_sens_pct']:.1f}% vs AS {as1['z_A_sens_pct']:.1f}%")
        assert new["z_A_sens_pct"] > as1["z_A_sens_pct"], name
    record_property("measured", "; ".join(notes))
