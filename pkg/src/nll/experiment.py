"""Experiment pipeline: generate data, train a reduction, regress, tabulate.

Everything is driven by an :class:`ExperimentConfig`; the defaults for each
named problem follow the settings used for the reference tables (layer
counts, learning rates, regressors, sample sizes).
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import activesub, metrics, regression, revnet
from .loss import Batch, LossSpec
from .optim import TrainConfig, TrainTrace, train
from .problems import DomainBox, SampleSet, get_problem, sample_uniform

log = logging.getLogger(__name__)

METHODS = ("new_nll", "old_nll_hat", "old_nll_tilde", "as")
SPLITS = ("train", "valid", "test")

# per-problem settings; keys mirror ExperimentConfig fields
PRESETS = {
    "f5": dict(layers=30, n_test=10000, lr_new=0.003, lr_old=0.5, old_loss="old_nll_tilde",
               regressor="local_poly", regressor_config={"degree": 2, "k": 10}),
    "f4": dict(layers=30, n_test=10000, lr_new=0.003, lr_old=0.02, old_loss="old_nll_tilde",
               regressor="mlp", regressor_config={}),
    "r0": dict(layers=15, n_test=10000, lr_new=0.005, lr_old=0.1, old_loss="old_nll_hat",
               regressor="local_poly", regressor_config={"degree": 2, "k": 10},
               as_regressor="global_poly", as_regressor_config={"degree": 4}),
    # width 8 and init scale 0.3: the default n/2 = 2 is too narrow for four
    # inputs, and smaller initial weights stall in a local minimum on some seeds
    "burgers_K": dict(layers=7, width=8, init_scale=0.3, n_test=500, lr_new=0.005, lr_old=0.1, old_loss="old_nll_hat",
                      regressor="mlp", regressor_config={}),
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    problem: str = "f5"  # f4 | f5 | r0 | burgers_K | custom
    method: str = "new_nll"
    active: int = 1  # |A|: active coordinates (AS dimension k)
    n_train: int = 500
    n_valid: int = 500
    n_test: int = 10000
    layers: int = 30
    width: int | None = None  # hidden width m; None means n/2
    tau: float = 0.25
    init_scale: float = 0.1
    epochs: int = 5000
    lr: float | None = None  # None: the problem preset for the method
    lam: float = 1.0
    log_every: int = 10
    regressor: str = "local_poly"
    regressor_config: dict = field(default_factory=dict)
    seed: int = 0
    box: list | None = None  # [[lo, hi], ...]; required for r0
    data_dir: str | None = None  # custom datasets: train/valid/test CSVs
    out: str = "out"

    @classmethod
    def for_problem(cls, problem, **overrides) -> "ExperimentConfig":
        preset = dict(PRESETS.get(problem, {}))
        base = {k: v for k, v in preset.items() if k in _FIELDS}
        base.update(overrides)
        return cls(problem=problem, **base)

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        unknown = set(d) - _FIELDS
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        problem = d.get("problem", "f5")
        return cls.for_problem(problem, **{k: v for k, v in d.items() if k != "problem"})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self):
        if self.problem not in PRESETS and self.problem != "custom":
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.problem == "r0" and self.box is None:
            raise ConfigError("r0 needs a parameter box (8 [lo, hi] pairs)")
        if self.problem == "custom" and self.data_dir is None:
            raise ConfigError("custom problems read train/valid/test CSVs from data_dir")
        for name in ("n_train", "n_test", "layers", "epochs", "active"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_valid < 0:
            raise ConfigError("n_valid must be >= 0")
        if self.regressor not in regression.REGRESSORS:
            raise ConfigError(f"unknown regressor {self.regressor!r}")
        return self

    # -- derived settings -------------------------------------------------------
    @property
    def is_nll(self):
        return self.method != "as"

    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        preset = PRESETS.get(self.problem, {})
        if self.method == "new_nll":
            return preset.get("lr_new", 0.003)
        return preset.get("lr_old", 0.1)

    def loss_spec(self) -> LossSpec:
        kind = {"new_nll": "new", "old_nll_hat": "old_hat", "old_nll_tilde": "old_tilde"}[self.method]
        return LossSpec(kind, lam=self.lam, active_count=self.active)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.learning_rate(),
            optimizer="adam" if self.method == "new_nll" else "sgd",
            validation_size=self.n_valid,
            seed=self.seed,
            loss=self.loss_spec(),
            log_every=self.log_every,
        )

    def regressor_spec(self) -> tuple[str, dict]:
        preset = PRESETS.get(self.problem, {})
        if self.method == "as" and "as_regressor" in preset and self.regressor == preset.get("regressor"):
            return preset["as_regressor"], dict(preset["as_regressor_config"])
        return self.regressor, dict(self.regressor_config)

    def domain_box(self) -> DomainBox | None:
        return DomainBox.from_pairs(self.box) if self.box is not None else None

    def label(self) -> str:
        if self.method == "as":
            return f"AS {self.active}-D"
        name = "New NLL" if self.method == "new_nll" else "Old NLL"
        return name if self.active == 1 else f"{name} {self.active}"


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


# -- data --------------------------------------------------------------------

def data_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.data_dir) if cfg.data_dir is not None else Path(cfg.out) / "data"


def generate(cfg: ExperimentConfig) -> dict:
    """Sample train/valid/test sets; split ``i`` uses the seed ``[seed, i]``."""
    cfg.validate()
    if cfg.problem == "custom":
        raise ConfigError("custom problems bring their own data; nothing to generate")
    prob = get_problem(cfg.problem, cfg.domain_box())
    counts = {"train": cfg.n_train, "valid": cfg.n_valid, "test": cfg.n_test}
    sets = {}
    for i, split in enumerate(SPLITS):
        s = sample_uniform(prob.box, counts[split], [cfg.seed, i], prob.evaluate)
        s.meta.update(problem=cfg.problem, split=split, seed=cfg.seed)
        sets[split] = s
    return sets


def save_data(sets: dict, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for split, s in sets.items():
        path = directory / f"{split}.csv"
        s.save(path)
        paths.append(path)
    return paths


def load_data(directory) -> dict:
    directory = Path(directory)
    out = {}
    for split in SPLITS:
        path = directory / f"{split}.csv"
        if not path.exists():
            raise ConfigError(f"missing dataset {path}")
        out[split] = SampleSet.load(path)
    return out


# -- training ------------------------------------------------------------------

@dataclass
class Fitted:
    """A trained reduction: RevNet (NLL methods) or active subspace."""

    method: str
    active: int
    transform: object  # RevNetParams | ASModel
    trace: TrainTrace | None = None
    best: object = None

    def latent(self, xn) -> np.ndarray:
        """All transformed coordinates of normalized inputs."""
        if isinstance(self.transform, activesub.ASModel):
            return activesub.rotate(self.transform, xn)
        return revnet.forward(self.transform, xn)

    def active_coords(self, xn) -> np.ndarray:
        return self.latent(xn)[:, : self.active]

    def to_dict(self) -> dict:
        d = {"method": self.method, "active": self.active}
        if isinstance(self.transform, activesub.ASModel):
            d["as"] = json.loads(self.transform.to_json())
        else:
            d["revnet"] = self.transform.to_dict()
            if self.trace is not None:
                d["best_epoch"] = self.trace.best_epoch
        return d

    @classmethod
    def from_dict(cls, d) -> "Fitted":
        if "as" in d:
            return cls(d["method"], d["active"], activesub.ASModel.from_json(json.dumps(d["as"])))
        return cls(d["method"], d["active"], revnet.RevNetParams.from_dict(d["revnet"]))


def fit_reduction(cfg: ExperimentConfig, train_set: SampleSet, valid_set: SampleSet | None) -> Fitted:
    cfg.validate()
    if cfg.method == "as":
        if cfg.active > train_set.dim:
            raise ConfigError("AS dimension exceeds the input dimension")
        return Fitted("as", cfg.active, activesub.fit(train_set.gradn, cfg.active))
    n = train_set.dim
    params = revnet.init_params(n, cfg.layers, m=cfg.width, tau=cfg.tau, seed=cfg.seed,
                                scale=cfg.init_scale, pad=bool(n % 2))
    if cfg.active >= params.n:
        raise ConfigError("need at least one inactive coordinate")
    tr = Batch(train_set.xn, train_set.gradn)
    va = Batch(valid_set.xn, valid_set.gradn) if valid_set is not None and len(valid_set) else None
    params, trace, best = train(params, tr, va, cfg.train_config())
    return Fitted(cfg.method, cfg.active, params, trace, best)


# -- evaluation ----------------------------------------------------------------

@dataclass
class Evaluation:
    row: dict
    scatter: np.ndarray  # columns z_A..., f_true, f_pred
    regressor: object


def evaluate(fitted: Fitted | None, train_set: SampleSet, test_set: SampleSet, regressor,
             active: int = 1, label: str = "") -> Evaluation:
    """Regress f on the active coordinates and score the test set.

    ``fitted=None`` means the identity transform. ``regressor`` is an
    unfitted regressor object, or anything with ``fit``/``predict``.
    """
    if fitted is None:
        z_tr, z_te = train_set.xn[:, :active], test_set.xn[:, :active]
        sens = metrics.coordinate_sensitivities(None, test_set.xn, test_set.gradn)
    else:
        active = fitted.active
        z_tr, z_te = fitted.active_coords(train_set.xn), fitted.active_coords(test_set.xn)
        sens = metrics.coordinate_sensitivities(fitted.transform, test_set.xn, test_set.gradn)
    regressor.fit(z_tr, train_set.f)
    pred = np.asarray(regressor.predict(z_te), dtype=float)
    err = metrics.error_summary(test_set.f, pred)
    row = {
        "method": label,
        "samples": len(train_set),
        "z_A_sens_pct": sens.active(active),
        "rrmse_pct": 100.0 * err["rrmse"],
        "rl1_pct": 100.0 * err["rl1"],
        "rl2_pct": 100.0 * err["rl2"],
    }
    scatter = np.column_stack([z_te, test_set.f, pred])
    return Evaluation(row, scatter, regressor)


ROW_FIELDS = ("method", "samples", "z_A_sens_pct", "rrmse_pct", "rl1_pct", "rl2_pct")


def rows_to_csv(rows, extra=()) -> str:
    buf = io.StringIO()
    fields = list(ROW_FIELDS) + [f for f in extra if f not in ROW_FIELDS]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def scatter_to_csv(scatter, active) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"z{i + 1}" for i in range(active)] + ["f_true", "f_pred"])
    for row in scatter:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def run(cfg: ExperimentConfig, sets: dict | None = None) -> tuple[Fitted, Evaluation]:
    """Train and evaluate one (problem, method, sample count) cell."""
    cfg.validate()
    if sets is None:
        sets = generate(cfg) if cfg.problem != "custom" else load_data(data_dir(cfg))
    train_set = sets["train"].head(cfg.n_train)
    fitted = fit_reduction(cfg, train_set, sets.get("valid"))
    kind, rcfg = cfg.regressor_spec()
    ev = evaluate(fitted, train_set, sets["test"], regression.make(kind, **rcfg), label=cfg.label())
    return fitted, ev
