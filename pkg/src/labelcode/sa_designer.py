"""Simulated-annealing search over binary code matrices.

The energy of a matrix is its analytically estimated MAE. Every iteration
draws its estimator seed from ``(cfg.seed, iteration)``, and the current and
proposed matrices are scored under that same seed, so a run is a pure
function of its config.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .codebook import CodeMatrix, random_code

MOVE_KINDS = ("random_flip", "error_based")


@dataclass(frozen=True)
class AnnealConfig:
    n_levels: int = 16
    n_bits: int = 16
    k_max: int = 200
    t_initial: float = 0.1
    move_kind: str = "error_based"
    flips_per_move: int = 1
    r: float = analytic.DEFAULT_R
    sigma: float = analytic.DEFAULT_SIGMA
    n_samples: int | None = None
    f_samples_per_row: int = analytic.DEFAULT_SAMPLES_PER_LEVEL
    f_refresh: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if self.t_initial <= 0:
            raise ValueError("t_initial must be positive")
        if self.move_kind not in MOVE_KINDS:
            raise ValueError(f"move_kind must be one of {MOVE_KINDS}, got {self.move_kind!r}")
        if self.flips_per_move < 1:
            raise ValueError("flips_per_move must be >= 1")
        if self.move_kind == "error_based" and self.flips_per_move > self.n_levels:
            raise ValueError("error_based moves need flips_per_move <= n_levels")
        if self.f_refresh < 1:
            raise ValueError("f_refresh must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    current_energy: float
    best_energy: float
    accepted: bool
    temperature: float


@dataclass
class AnnealTrace:
    records: list[TraceRecord] = field(default_factory=list)

    @property
    def best_energies(self) -> np.ndarray:
        return np.array([r.best_energy for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "current_energy", "best_energy", "accepted", "temperature"])
        for r in self.records:
            w.writerow([r.iteration, repr(r.current_energy), repr(r.best_energy), int(r.accepted), repr(r.temperature)])
        return buf.getvalue()


def accept(delta: float, temperature: float, u: float) -> bool:
    """Metropolis rule: always take improvements, else with prob ``exp(-delta/t)``."""
    return delta < 0 or math.exp(-delta / temperature) > u


def move_random_flip(code: CodeMatrix, b: int, rng: np.random.Generator) -> CodeMatrix:
    n, m = code.bits.shape
    if not 1 <= b <= n * m:
        raise ValueError(f"b must be in 1..{n * m}")
    flat = code.bits.reshape(-1).copy()
    flat[rng.choice(n * m, size=b, replace=False)] ^= 1
    return CodeMatrix(flat.reshape(n, m))


def top_pairs(F: np.ndarray, b: int) -> list[tuple[int, int]]:
    """Largest ``b`` positive entries of ``F``; ties by ascending ``(i, j)``."""
    i, j = np.nonzero(F > 0)
    if i.size == 0:
        return []
    order = np.lexsort((j, i, -F[i, j]))[:b]
    return [(int(i[k]), int(j[k])) for k in order]


def move_error_based(code: CodeMatrix, F: np.ndarray, b: int, rng: np.random.Generator) -> CodeMatrix:
    """For each top-b pair ``(i, j)`` flip one bit of row ``i`` where it agrees with row ``j``.

    Pairs are processed in rank order on the evolving matrix.
    """
    bits = code.bits.copy()
    for i, j in top_pairs(F, b):
        agree = np.flatnonzero(bits[i] == bits[j])
        if agree.size == 0:
            continue
        bits[i, rng.choice(agree)] ^= 1
    return CodeMatrix(bits)


def energy(code: CodeMatrix, cfg: AnnealConfig, seed: int) -> float:
    model = analytic.build_error_model(code, cfg.r, cfg.sigma)
    return analytic.estimate_mae(code, model, cfg.n_samples, seed).mean_abs_error


def _seed(cfg: AnnealConfig, iteration: int, stream: int) -> int:
    return int(np.random.SeedSequence([cfg.seed, iteration, stream]).generate_state(1)[0])


def anneal(cfg: AnnealConfig) -> tuple[CodeMatrix, AnnealTrace]:
    current = random_code(cfg.n_levels, cfg.n_bits, _seed(cfg, 0, 0))
    rng = np.random.default_rng(_seed(cfg, 0, 1))
    e_current = energy(current, cfg, _seed(cfg, 0, 2))
    best, e_best = current, e_current
    t = cfg.t_initial
    trace = AnnealTrace([TraceRecord(0, e_current, e_best, True, t)])
    F = None

    for k in range(1, cfg.k_max + 1):
        if cfg.move_kind == "random_flip":
            proposal = move_random_flip(current, cfg.flips_per_move, rng)
        else:
            if F is None or (k - 1) % cfg.f_refresh == 0:
                model = analytic.build_error_model(current, cfg.r, cfg.sigma)
                F = analytic.confusion_weighted_error(current, model, cfg.f_samples_per_row, _seed(cfg, k, 3))
            proposal = move_error_based(current, F, cfg.flips_per_move, rng)

        eval_seed = _seed(cfg, k, 2)
        # common random numbers: both matrices scored under this iteration's seed
        e_old = energy(current, cfg, eval_seed)
        e_new = energy(proposal, cfg, eval_seed)
        took = accept(e_new - e_old, t, rng.random())
        if took:
            current, e_current = proposal, e_new
        else:
            e_current = e_old
        if e_current < e_best:
            best, e_best = current, e_current
        trace.records.append(TraceRecord(k, e_current, e_best, took, t))
        t = cfg.t_initial / (k + 1)

    return best, trace
