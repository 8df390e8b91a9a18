"""Grids for the two benchmark tables, reference values and band checks."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from . import experiment
from .experiment import ExperimentConfig

TABLES = {
    "table1": {
        "samples": (100, 500, 2500),
        "cells": (("f4", "new_nll", 1), ("f4", "old_nll_tilde", 1), ("f4", "as", 1),
                  ("f5", "new_nll", 1), ("f5", "old_nll_tilde", 1), ("f5", "old_nll_tilde", 2)),
    },
    "table2": {
        "samples": (20, 100, 500),
        "cells": (("r0", "new_nll", 1), ("r0", "old_nll_hat", 1), ("r0", "as", 1), ("r0", "as", 2),
                  ("burgers_K", "new_nll", 1), ("burgers_K", "old_nll_hat", 1),
                  ("burgers_K", "as", 1), ("burgers_K", "as", 2)),
    },
}

# Reference (z_A sensitivity %, RRMSE %) per (problem, row label, samples).
# The R0 rows are absent: their parameter box is user supplied.
REFERENCE = {
    ("f4", "New NLL"): {100: (78.7, 3.86), 500: (89.8, 1.82), 2500: (94.5, 0.827)},
    ("f4", "Old NLL"): {100: (60.4, 6.63), 500: (65.9, 4.58), 2500: (69.2, 4.02)},
    ("f4", "AS 1-D"): {100: (25.8, 30.3), 500: (25.9, 21.7), 2500: (25.9, 15.9)},
    ("f5", "New NLL"): {100: (75.1, 0.920), 500: (88.6, 0.370), 2500: (93.8, 0.154)},
    ("f5", "Old NLL"): {100: (54.6, 0.699), 500: (55.4, 0.942), 2500: (56.1, 0.784)},
    ("f5", "Old NLL 2"): {100: (61.8, 1.80), 500: (68.7, 1.03), 2500: (67.5, 0.894)},
    ("burgers_K", "New NLL"): {20: (97.6, 0.425), 100: (98.3, 0.186), 500: (98.3, 0.101)},
    ("burgers_K", "Old NLL"): {20: (80.1, 3.52), 100: (80.5, 3.19), 500: (80.3, 3.25)},
    ("burgers_K", "AS 1-D"): {20: (64.4, 6.64), 100: (65.1, 6.81), 500: (65.0, 6.78)},
    ("burgers_K", "AS 2-D"): {20: (87.5, 3.32), 100: (88.7, 2.64), 500: (88.7, 2.65)},
}

# A cell is within band when its sensitivity is within SENS_BAND points of
# the reference and its RRMSE is at most RRMSE_FACTOR times the reference.
SENS_BAND = 10.0
RRMSE_FACTOR = 3.0


def band_check(problem, label, samples, sens, rrmse_pct) -> tuple[str, str]:
    """Return (status, detail); status is ``ok``, ``flag`` or ``n/a``."""
    ref = REFERENCE.get((problem, label), {}).get(samples)
    if ref is None:
        return "n/a", "no reference"
    s_ref, e_ref = ref
    bad = []
    if abs(sens - s_ref) > SENS_BAND:
        bad.append(f"sens {sens:.1f} vs {s_ref}")
    if rrmse_pct > RRMSE_FACTOR * e_ref:
        bad.append(f"rrmse {rrmse_pct:.3g} vs {e_ref}")
    return ("flag", "; ".join(bad)) if bad else ("ok", "")


@dataclass(frozen=True)
class Job:
    problem: str
    method: str
    active: int
    samples: int

    def describe(self):
        return f"{self.problem:10s} {self.method:14s} active={self.active} samples={self.samples}"


def plan(table: str, samples=None, problems=None) -> list[Job]:
    if table not in TABLES:
        raise experiment.ConfigError(f"unknown table {table!r}; expected one of {sorted(TABLES)}")
    spec = TABLES[table]
    counts = tuple(samples) if samples else spec["samples"]
    return [Job(p, m, a, s) for (p, m, a) in spec["cells"] for s in counts
            if problems is None or p in problems]


def _run_job(args):
    job, base, sets = args
    cfg = replace(base, problem=job.problem, method=job.method, active=job.active, n_train=job.samples)
    _, ev = experiment.run(cfg, sets)
    return ev.row


def reproduce(table: str, base: dict, samples=None, boxes=None, jobs: int = 1, seed: int = 0) -> list[dict]:
    """Run every cell of ``table``; returns long-form rows with band status.

    ``base`` holds config overrides applied to every cell (e.g. ``epochs``).
    ``boxes`` maps a problem name to its [lo, hi] pairs; problems that need a
    box and have none are skipped with a ``skipped`` row.
    """
    boxes = boxes or {}
    todo = plan(table, samples)
    pools, configs, rows, work = {}, {}, [], []
    for job in todo:
        if job.problem not in pools:
            if job.problem == "r0" and "r0" not in boxes:
                pools[job.problem] = None
            else:
                cfg = ExperimentConfig.for_problem(job.problem, seed=seed, box=boxes.get(job.problem),
                                                   n_train=max(j.samples for j in todo if j.problem == job.problem),
                                                   **base)
                pools[job.problem] = experiment.generate(cfg)
                configs[job.problem] = cfg
        if pools[job.problem] is None:
            rows.append({"problem": job.problem, "method": job.method, "samples": job.samples,
                         "status": "skipped", "detail": "needs a parameter box"})
            continue
        work.append((job, configs[job.problem], pools[job.problem]))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_job, work))
    else:
        results = [_run_job(w) for w in work]
    for (job, _, _), row in zip(work, results):
        status, detail = band_check(job.problem, row["method"], job.samples, row["z_A_sens_pct"], row["rrmse_pct"])
        rows.append({"problem": job.problem, **row, "status": status, "detail": detail})
    rows.extend(property_checks(rows))
    return rows


def property_checks(rows) -> list[dict]:
    """Problems without reference values get a relative check instead:
    New NLL must concentrate more sensitivity than 1-D AS on the same data."""
    out = []
    referenced = {p for p, _ in REFERENCE}
    for problem in sorted({r["problem"] for r in rows} - referenced):
        for s in sorted({r["samples"] for r in rows if r["problem"] == problem}):
            cell = {r["method"]: r for r in rows if r["problem"] == problem and r["samples"] == s
                    and "z_A_sens_pct" in r}
            if "New NLL" in cell and "AS 1-D" in cell:
                ok = cell["New NLL"]["z_A_sens_pct"] > cell["AS 1-D"]["z_A_sens_pct"]
                out.append({"problem": problem, "method": "New NLL > AS 1-D", "samples": s,
                            "status": "ok" if ok else "flag",
                            "detail": f"{cell['New NLL']['z_A_sens_pct']:.1f} vs {cell['AS 1-D']['z_A_sens_pct']:.1f}"})
    return out


LONG_FIELDS = ("problem",) + experiment.ROW_FIELDS + ("status", "detail")


def long_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LONG_FIELDS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def wide_csv(rows, table) -> str:
    """Table layout: one line per (problem, method), four metrics per sample count."""
    counts = sorted({r["samples"] for r in rows if "rrmse_pct" in r})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["function", "method"]
    for s in counts:
        head += [f"{s}_z_A_sens_pct", f"{s}_rrmse_pct", f"{s}_rl1_pct", f"{s}_rl2_pct"]
    w.writerow(head)
    seen = []
    for r in rows:
        key = (r["problem"], r["method"])
        if "rrmse_pct" in r and key not in seen:
            seen.append(key)
    for problem, method in seen:
        line = [problem, method]
        for s in counts:
            cell = next((r for r in rows if r["problem"] == problem and r["method"] == method
                         and r["samples"] == s and "rrmse_pct" in r), None)
            if cell is None:
                line += [""] * 4
            else:
                line += [f"{cell[k]:.3g}" for k in ("z_A_sens_pct", "rrmse_pct", "rl1_pct", "rl2_pct")]
        w.writerow(line)
    return buf.getvalue()
