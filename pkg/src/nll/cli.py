"""Command line driver: ``python -m nll <command> [--config FILE] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 validation failure, 2 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiment, regression, tables
from .experiment import ConfigError, ExperimentConfig, Fitted
from .loss import Batch, LossSpec, loss_and_gradient
from .optim import NonFiniteLossError
from .problems import CFLError, SamplingError, get_problem
from .revnet import init_params

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("nll")


def _config(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "problem", None):
        overrides["problem"] = args.problem
    if getattr(args, "method", None):
        overrides["method"] = args.method
    for name in ("seed", "epochs", "n_train", "active"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    if args.out is not None:
        overrides["out"] = args.out
    if args.config:
        base = json.loads(Path(args.config).read_text()) if Path(args.config).exists() else None
        if base is None:
            raise ConfigError(f"config file {args.config} not found")
        base.update(overrides)
        return ExperimentConfig.from_dict(base).validate()
    return ExperimentConfig.from_dict(overrides).validate()


def _setup_log(out: Path):
    # timestamps live only in the log file, so every other output is reproducible
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger("nll")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# -- commands ------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    _setup_log(out)
    sets = experiment.generate(cfg)
    paths = experiment.save_data(sets, experiment.data_dir(cfg))
    for p in paths:
        log.info("wrote %s", p)
        print(p)
    if cfg.problem == "burgers_K":
        worst = _spot_check_gradients(cfg, sets["train"])
        print(f"gradient spot check: max relative error {worst:.2e}")
        if worst > 1e-4:
            return EXIT_INVALID
    return EXIT_OK


def _spot_check_gradients(cfg, sample_set, eps=1e-6) -> float:
    """Central differences of the stored evaluator at every stored point."""
    prob = get_problem(cfg.problem, cfg.domain_box())
    worst = 0.0
    for x, g in zip(sample_set.x, sample_set.grad):
        h = eps * np.maximum(1.0, np.abs(x))
        plus = prob.evaluate(x + np.diag(h))[0]
        minus = prob.evaluate(x - np.diag(h))[0]
        fd = (plus - minus) / (2 * h)
        worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300)))
    return worst


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    _setup_log(out)
    sets = experiment.load_data(experiment.data_dir(cfg))
    train_set = sets["train"].head(cfg.n_train)
    t0 = time.perf_counter()
    try:
        fitted = experiment.fit_reduction(cfg, train_set, sets["valid"])
    except NonFiniteLossError as exc:
        _write(out / "trace.csv", exc.trace.to_csv())
        raise
    log.info("trained %s in %.2fs", cfg.method, time.perf_counter() - t0)
    _write(out / "model.json", json.dumps(fitted.to_dict()) + "\n")
    if fitted.trace is not None:
        _write(out / "trace.csv", fitted.trace.to_csv())
        best = Fitted(fitted.method, fitted.active, fitted.best)
        _write(out / "model_best.json", json.dumps(best.to_dict()) + "\n")
    _write(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(out / "model.json")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    _setup_log(out)
    model_path = out / ("model_best.json" if getattr(args, "best", False) else "model.json")
    if not model_path.exists():
        raise ConfigError(f"missing model {model_path}; run train first")
    fitted = Fitted.from_dict(json.loads(model_path.read_text()))
    sets = experiment.load_data(experiment.data_dir(cfg))
    kind, rcfg = cfg.regressor_spec()
    ev = experiment.evaluate(fitted, sets["train"].head(cfg.n_train), sets["test"],
                             regression.make(kind, **rcfg), label=cfg.label())
    _write(out / "metrics.csv", experiment.rows_to_csv([ev.row]))
    _write(out / "scatter.csv", experiment.scatter_to_csv(ev.scatter, fitted.active))
    _write(out / "regressor.json", json.dumps(ev.regressor.to_dict()) + "\n")
    print(experiment.rows_to_csv([ev.row]), end="")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    jobs = tables.plan(args.table, args.samples)
    if args.dry_run:
        for job in jobs:
            print(job.describe())
        return EXIT_OK
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
        for key in ("problem", "method", "active", "n_train", "seed", "box"):
            base.pop(key, None)
    if args.epochs is not None:
        base["epochs"] = args.epochs
    boxes = {}
    if args.ranges:
        boxes["r0"] = json.loads(Path(args.ranges).read_text())
    out = Path(args.out or "out")
    _setup_log(out)
    rows = tables.reproduce(args.table, base, args.samples, boxes, jobs=args.jobs, seed=args.seed or 0)
    _write(out / f"{args.table}.csv", tables.wide_csv(rows, args.table))
    _write(out / f"{args.table}_bands.csv", tables.long_csv(rows))
    flagged = [r for r in rows if r.get("status") == "flag"]
    print(tables.wide_csv(rows, args.table), end="")
    print(f"{len(flagged)} cell(s) outside the reference band")
    for r in flagged:
        print(f"  flag: {r['problem']} {r['method']} {r['samples']}: {r['detail']}")
    return EXIT_OK


def cmd_check_gradients(args) -> int:
    """Finite-difference checks of problem gradients and all loss gradients."""
    rng = np.random.default_rng(args.seed or 0)
    failures = []
    for name in ("f4", "f5", "burgers_K"):
        prob = get_problem(name)
        count = 2 if name == "burgers_K" else 20
        before = len(failures)
        for _ in range(count):
            x = rng.uniform(prob.box.lo, prob.box.hi)
            g = prob.evaluate(x)[1]
            h = 1e-6 * np.maximum(1.0, np.abs(x))
            fd = (prob.evaluate(x + np.diag(h))[0] - prob.evaluate(x - np.diag(h))[0]) / (2 * h)
            err = np.linalg.norm(fd - g) / max(np.linalg.norm(fd), 1e-300)
            if err > 1e-6:
                failures.append(f"{name} gradient: relative error {err:.2e}")
        print(f"{name:10s} gradient {'ok' if len(failures) == before else 'FAILED'}")
    for kind in ("new", "old_hat", "old_tilde"):
        worst = 0.0
        for _ in range(3):
            p = init_params(4, 3, seed=int(rng.integers(1 << 30)), scale=0.5)
            b = Batch(rng.uniform(-1, 1, (5, 4)), rng.normal(size=(5, 4)))
            worst = max(worst, _loss_fd_error(p, b, LossSpec(kind)))
        status = "ok" if worst <= 1e-4 else "FAILED"
        if worst > 1e-4:
            failures.append(f"{kind} loss gradient: relative error {worst:.2e}")
        print(f"{kind:10s} loss gradient {status} (max relative error {worst:.1e})")
    for f in failures:
        print(f, file=sys.stderr)
    return EXIT_INVALID if failures else EXIT_OK


def _loss_fd_error(p, batch, spec, eps=1e-5) -> float:
    from .loss import loss_value

    _, grads = loss_and_gradient(p, batch, spec)
    worst = 0.0
    for name, A in p.arrays.items():
        for idx in np.ndindex(A.shape):
            orig = A[idx]
            A[idx] = orig + eps
            up = loss_value(p, batch, spec)
            A[idx] = orig - eps
            down = loss_value(p, batch, spec)
            A[idx] = orig
            fd = (up - down) / (2 * eps)
            worst = max(worst, abs(fd - grads[name][idx]) / max(abs(fd), 1e-3))
    return worst


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="random seed (data and network)")
    common.add_argument("--out", help="output directory")

    exp = argparse.ArgumentParser(add_help=False)
    exp.add_argument("--problem", choices=sorted(experiment.PRESETS) + ["custom"])
    exp.add_argument("--method", choices=experiment.METHODS)
    exp.add_argument("--epochs", type=int)
    exp.add_argument("--n-train", dest="n_train", type=int)
    exp.add_argument("--active", type=int)

    parser = argparse.ArgumentParser(prog="python -m nll", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", parents=[common, exp], help="sample train/valid/test sets")
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("train", parents=[common, exp], help="fit an NLL network or active subspace")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", parents=[common, exp], help="regress on z_A and score the test set")
    p.add_argument("--best", action="store_true", help="use the best-validation network")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("reproduce", parents=[common], help="run a full benchmark table")
    p.add_argument("table", choices=sorted(tables.TABLES))
    p.add_argument("--dry-run", action="store_true", help="list the planned jobs only")
    p.add_argument("--samples", type=int, nargs="+", help="override the sample counts")
    p.add_argument("--epochs", type=int, help="override the epoch budget")
    p.add_argument("--ranges", help="JSON list of 8 [lo, hi] pairs for the R0 rows")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_reproduce)
    p = sub.add_parser("check-gradients", parents=[common], help="finite-difference self test")
    p.set_defaults(func=cmd_check_gradients)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (NonFiniteLossError, CFLError, FloatingPointError, SamplingError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
