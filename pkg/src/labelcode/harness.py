"""Synthetic regression tasks, the shared training loop, reports and sweeps."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from . import codebook
from .baselines import BelModel, DirectModel, MulticlassModel
from .rlel import (
    LabelMap,
    RlelHead,
    RlelLossConfig,
    RlelModel,
    NonFiniteLoss,
    encoding_diagnostics,
    extract_encoding,
)
from .tensornet import OPTIMIZERS, NetGraph, OptimConfig, Optimizer

GENERATOR_KINDS = ("smooth_sine", "piecewise_linear", "radial")
METHODS = ("rlel", "direct_l1", "direct_l2", "multiclass", "bel")
SWEEP_AXES = ("alpha", "beta", "n_levels", "train_fraction", "r1_scale")

REPORT_COLUMNS = [
    "method", "seed", "alpha", "beta", "r1_scale", "n_levels", "train_fraction",
    "test_mae", "approx_transitions", "binary_transitions", "distance_corr", "wall_secs",
]


@dataclass(frozen=True)
class SyntheticTask:
    input_dim: int = 16
    kind: str = "smooth_sine"
    noise_frac: float = 0.02
    label_low: float = 0.0
    label_high: float = 100.0
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator {self.kind!r}; choose from {GENERATOR_KINDS}")
        if min(self.n_train, self.n_val, self.n_test, self.input_dim) < 1:
            raise ValueError("sizes and input_dim must be >= 1")
        if not self.label_high > self.label_low:
            raise ValueError("label_high must exceed label_low")
        if self.noise_frac < 0:
            raise ValueError("noise_frac must be nonnegative")


@dataclass
class Split:
    x: np.ndarray
    y: np.ndarray


@dataclass
class Dataset:
    train: Split
    val: Split
    test: Split
    clean: dict[str, np.ndarray] = field(default_factory=dict)


def _raw_function(kind: str, d: int, rng: np.random.Generator):
    if kind == "smooth_sine":
        w = rng.normal(0.0, 2.0 / np.sqrt(d), size=(4, d))
        phase = rng.uniform(0.0, 2 * np.pi, size=4)
        return lambda x: np.sin(x @ w.T + phase).sum(axis=1)
    if kind == "piecewise_linear":
        v = rng.normal(0.0, 1.0 / np.sqrt(d), size=(4, d))
        c = rng.uniform(-0.5, 0.5, size=4)
        a = rng.choice([-1.0, 1.0], size=4)
        return lambda x: (a * np.abs(x @ v.T - c)).sum(axis=1)
    centre = rng.uniform(-0.5, 0.5, size=d)
    return lambda x: np.linalg.norm(x - centre, axis=1)


def generate_task(task: SyntheticTask) -> Dataset:
    """Inputs uniform on ``[-1, 1]^d``; targets squashed onto the label range.

    The raw function is standardised with statistics from a separate
    reference sample and passed through the normal CDF, which spreads the
    labels across the range.
    """
    rng = np.random.default_rng(task.seed)
    f = _raw_function(task.kind, task.input_dim, rng)
    ref = f(rng.uniform(-1.0, 1.0, size=(20000, task.input_dim)))
    mu, sd = ref.mean(), ref.std()
    span = task.label_high - task.label_low

    n = task.n_train + task.n_val + task.n_test
    x = rng.uniform(-1.0, 1.0, size=(n, task.input_dim))
    clean = task.label_low + span * ndtr((f(x) - mu) / sd)
    y = np.clip(clean + rng.normal(0.0, task.noise_frac * span, size=n), task.label_low, task.label_high)

    a, b = task.n_train, task.n_train + task.n_val
    return Dataset(
        train=Split(x[:a], y[:a]),
        val=Split(x[a:b], y[a:b]),
        test=Split(x[b:], y[b:]),
        clean={"train": clean[:a], "val": clean[a:b], "test": clean[b:]},
    )


# Adam step sizes picked on validation MAE by scripts/tune_defaults.py
# (tuning seeds 100, 101, disjoint from the evaluation seeds)
METHOD_LR = {
    "rlel": 1e-3,
    "direct_l1": 3e-3,
    "direct_l2": 3e-3,
    "multiclass": 1e-3,
    "bel": 1e-3,
}


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "rlel"
    seed: int = 0
    n_levels: int = 64
    theta: int = 10
    n_bits: int = 64
    hidden: tuple[int, ...] = (64, 32)
    activation: str = "tanh"
    lr: float | None = None  # None -> METHOD_LR[method]
    decoder_lr_mult: float = 10.0
    optimizer: str = "adam"
    weight_decay: float = 0.0
    epochs: int = 100
    batch_size: int = 16
    alpha: float = 0.0
    beta: float = 0.0
    r1_scale: float = 2.0
    direct_label_scale: float | None = 0.2  # None -> 1 / n_levels
    multiclass_depth: int = 1
    bel_code: str = "unary"
    train_fraction: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must be in (0, 1]")
        if self.lr is not None and self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")

    @property
    def resolved_lr(self) -> float:
        return METHOD_LR[self.method] if self.lr is None else self.lr


@dataclass
class RunReport:
    method: str
    seed: int
    config: dict
    train_loss: list[float]
    test_mae: float
    train_mae: float
    val_mae: float
    diagnostics: dict | None
    wall_secs: float
    status: str = "ok"
    message: str = ""
    sample_ids: np.ndarray | None = None
    y_raw: np.ndarray | None = None
    y_pred_raw: np.ndarray | None = None

    def row(self, wall_time: bool = True) -> dict:
        diag = self.diagnostics or {}
        return {
            "method": self.method,
            "seed": self.seed,
            "alpha": self.config["experiment"]["alpha"],
            "beta": self.config["experiment"]["beta"],
            "r1_scale": self.config["experiment"]["r1_scale"],
            "n_levels": self.config["experiment"]["n_levels"],
            "train_fraction": self.config["experiment"]["train_fraction"],
            "test_mae": self.test_mae,
            "approx_transitions": diag.get("approx_transitions", ""),
            "binary_transitions": diag.get("binary_transitions", ""),
            "distance_corr": diag.get("distance_corr", ""),
            "wall_secs": self.wall_secs if wall_time else "",
        }


def mean_absolute_error(y, y_hat) -> float:
    return float(np.mean(np.abs(np.asarray(y) - np.asarray(y_hat))))


def resolve_bel_code(spec: str, n_levels: int) -> codebook.CodeMatrix:
    """A generator name (``unary``, ``johnson``, ``hadamard``) or a code-file path."""
    if spec in codebook.GENERATORS:
        return codebook.GENERATORS[spec](n_levels)
    code = codebook.read_code(spec)
    if code.n_levels != n_levels:
        raise ValueError(f"code file {spec} has N={code.n_levels} but the experiment uses N={n_levels}")
    return code


def build_model(cfg: ExperimentConfig, input_dim: int, code: codebook.CodeMatrix | None = None):
    rng = np.random.default_rng(cfg.seed)
    widths = [input_dim, *cfg.hidden]
    # the backbone is drawn first so every method starts from the same weights
    backbone = NetGraph.mlp(widths, [cfg.activation] * len(cfg.hidden), rng, name="backbone")
    if cfg.method == "rlel":
        head = RlelHead(backbone.n_out, cfg.theta, cfg.n_bits, cfg.n_levels, rng)
        return RlelModel(backbone, head, RlelLossConfig(cfg.alpha, cfg.beta, cfg.r1_scale))
    if cfg.method in ("direct_l1", "direct_l2"):
        return DirectModel(backbone, cfg.method, cfg.n_levels, rng, cfg.direct_label_scale)
    if cfg.method == "multiclass":
        return MulticlassModel(backbone, cfg.n_levels, rng, depth=cfg.multiclass_depth, hidden=cfg.theta)
    code = code if code is not None else resolve_bel_code(cfg.bel_code, cfg.n_levels)
    if code.n_levels != cfg.n_levels:
        raise ValueError(f"BEL code has N={code.n_levels} but the experiment uses N={cfg.n_levels}")
    return BelModel(backbone, code, rng, theta=cfg.theta)


def train_model(model, x, y_levels, cfg: ExperimentConfig) -> list[float]:
    """Minibatch training; returns the mean per-batch loss of each epoch."""
    optim = OptimConfig(
        method=cfg.optimizer,
        lr=cfg.resolved_lr,
        group_multipliers={"decoder": cfg.decoder_lr_mult},
        weight_decay=cfg.weight_decay,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
    )
    opt = Optimizer(model.param_groups(), optim)
    rng = np.random.default_rng([cfg.seed, 1])
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        total, n_batches = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            loss, _ = model.loss(x[idx], y_levels[idx])
            loss.backward()
            opt.step()
            total += float(loss.data)
            n_batches += 1
        history.append(total / n_batches)
    return history


def _subset(split: Split, fraction: float) -> Split:
    n = max(1, int(round(fraction * len(split.y))))
    return Split(split.x[:n], split.y[:n])


def config_echo(task: SyntheticTask, cfg: ExperimentConfig) -> dict:
    exp = asdict(cfg)
    exp["hidden"] = list(cfg.hidden)
    return {"task": asdict(task), "experiment": exp}


def run_experiment(task: SyntheticTask, cfg: ExperimentConfig, data: Dataset | None = None,
                   code: codebook.CodeMatrix | None = None) -> RunReport:
    start = time.perf_counter()
    data = data if data is not None else generate_task(task)
    label_map = LabelMap(task.label_low, task.label_high, cfg.n_levels)
    train = _subset(data.train, cfg.train_fraction)
    y_train = label_map.to_levels(train.y)
    echo = config_echo(task, cfg)
    model = build_model(cfg, task.input_dim, code)

    nan = float("nan")
    try:
        history = train_model(model, train.x, y_train, cfg)
        pred_test = label_map.to_raw(model.predict(data.test.x))
        pred_train = label_map.to_raw(model.predict(train.x))
        pred_val = label_map.to_raw(model.predict(data.val.x))
        if not (np.isfinite(pred_test).all() and np.isfinite(pred_train).all()):
            raise NonFiniteLoss("non-finite predictions")
    except (NonFiniteLoss, FloatingPointError) as exc:
        return RunReport(cfg.method, cfg.seed, echo, [], nan, nan, nan, None,
                         time.perf_counter() - start, status="diverged", message=str(exc))

    diagnostics = None
    if hasattr(model, "codes"):
        enc = extract_encoding(model.codes(train.x), label_map.quantize(y_train), cfg.n_levels)
        if enc.populated.sum() >= 2:
            d = encoding_diagnostics(enc)
            diagnostics = {
                "approx_transitions": d.approx_transitions,
                "binary_transitions": d.binary_transitions,
                "distance_corr": "" if d.distance_corr is None else d.distance_corr,
                "distance_corr_flag": d.corr_flag or "",
                "pairs": d.pairs,
                "decoder_col_norms": _decoder_norms(model),
            }

    return RunReport(
        method=cfg.method,
        seed=cfg.seed,
        config=echo,
        train_loss=history,
        test_mae=mean_absolute_error(data.test.y, pred_test),
        train_mae=mean_absolute_error(train.y, pred_train),
        val_mae=mean_absolute_error(data.val.y, pred_val),
        diagnostics=diagnostics,
        wall_secs=time.perf_counter() - start,
        sample_ids=np.arange(len(data.test.y)),
        y_raw=data.test.y,
        y_pred_raw=pred_test,
    )


def _decoder_norms(model) -> list[float] | None:
    head = getattr(model, "head", None)
    D = getattr(head, "D", None)
    if D is None:
        return None
    return [float(v) for v in np.linalg.norm(D.data, axis=0)]


# -- sweeps -----------------------------------------------------------------


def apply_axis(task: SyntheticTask, cfg: ExperimentConfig, axis: str, value) -> tuple[SyntheticTask, ExperimentConfig]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if axis == "n_levels":
        value = int(value)
    else:
        value = float(value)
    return task, replace(cfg, **{axis: value})


def sweep(axis: str, values, task: SyntheticTask, base: ExperimentConfig, seeds, methods=None) -> list[RunReport]:
    """One run per (value, method, seed). Each seed fixes the data for every method."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    methods = list(methods) if methods else [base.method]
    values.sort()
    reports = []
    for seed in seeds:
        seeded_task = replace(task, seed=seed)
        data = generate_task(seeded_task)
        for value in values:
            for method in methods:
                t, cfg = apply_axis(seeded_task, replace(base, method=method, seed=seed), axis, value)
                try:
                    reports.append(run_experiment(t, cfg, data=data))
                except (ValueError, OSError) as exc:
                    nan = float("nan")
                    reports.append(RunReport(method, seed, config_echo(t, cfg), [], nan, nan, nan,
                                             None, 0.0, status="failed", message=str(exc)))
    return sort_reports(reports, axis)


def sort_reports(reports: list[RunReport], axis: str | None = None) -> list[RunReport]:
    def key(r):
        exp = r.config["experiment"]
        v = exp.get(axis, 0) if axis else 0
        return (v, r.method, r.seed)

    return sorted(reports, key=key)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reports_csv(reports: list[RunReport], wall_time: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS + ["status"])
    for r in reports:
        row = r.row(wall_time)
        w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS] + [r.status])
    return buf.getvalue()


AGG_METRICS = ("test_mae", "approx_transitions", "binary_transitions", "distance_corr")


def aggregate(reports: list[RunReport], axis: str) -> list[dict]:
    groups: dict[tuple, list[RunReport]] = {}
    for r in reports:
        groups.setdefault((r.config["experiment"][axis], r.method), []).append(r)
    rows = []
    for (value, method), rs in sorted(groups.items()):
        row = {"axis": axis, "value": value, "method": method, "n_runs": len(rs),
               "n_failed": sum(r.status != "ok" for r in rs)}
        for m in AGG_METRICS:
            vals = [r.row()[m] for r in rs if r.status == "ok"]
            vals = [float(v) for v in vals if v != "" and not (isinstance(v, float) and math.isnan(v))]
            row[f"{m}_mean"] = float(np.mean(vals)) if vals else ""
            row[f"{m}_std"] = float(np.std(vals)) if vals else ""
        rows.append(row)
    return rows


def aggregate_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["axis", "value", "method", "n_runs", "n_failed"] + [f"{m}_{s}" for m in AGG_METRICS for s in ("mean", "std")]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def predictions_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "y_raw", "y_pred_raw"])
    if report.y_raw is not None:
        for i, y, p in zip(report.sample_ids, report.y_raw, report.y_pred_raw):
            w.writerow([int(i), repr(float(y)), repr(float(p))])
    return buf.getvalue()


def pairs_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label_i", "label_j", "label_gap", "l1_distance"])
    for i, j, gap, dist in (report.diagnostics or {}).get("pairs", []):
        w.writerow([i, j, gap, repr(dist)])
    return buf.getvalue()


def metrics_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    w.writerow(["test_mae", _fmt(report.test_mae)])
    w.writerow(["train_mae", _fmt(report.train_mae)])
    diag = report.diagnostics or {}
    for key in ("approx_transitions", "binary_transitions", "distance_corr", "distance_corr_flag"):
        if key in diag:
            w.writerow([key, _fmt(diag[key])])
    for idx, v in enumerate(diag.get("decoder_col_norms") or [], start=1):
        w.writerow([f"decoder_col_norm_{idx}", repr(v)])
    return buf.getvalue()
