"""Autoencoder code design.

An hourglass net reconstructs each label's distance profile ``S_i[j] = |i-j|``;
its bottleneck activations are the real-valued codes. A hinge keeps every pair
of codes at least ``margin`` apart in L1, and the result is binarized row by
row into equal numbers of ones and zeros.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import codebook
from .rlel import check_finite
from .tensornet import NetGraph, OptimConfig, Tensor, relu, sgd_step, tabs, zero_grads


@dataclass(frozen=True)
class AeConfig:
    n_levels: int = 16
    code_width: int = 8
    margin: float | None = None  # defaults to code_width / 4
    pair_weight: float = 1.0
    l2_weight: float = 1e-4
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 16
    # S is fed to the net multiplied by this; None means 1 / (N - 1)
    similarity_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError("n_levels must be >= 2")
        if self.code_width < 1:
            raise ValueError("code_width must be >= 1")
        if min(self.pair_weight, self.l2_weight) < 0 or (self.margin is not None and self.margin <= 0):
            raise ValueError("weights must be nonnegative and margin positive")

    @property
    def resolved_margin(self) -> float:
        return self.code_width / 4 if self.margin is None else self.margin

    @property
    def resolved_scale(self) -> float:
        return 1.0 / (self.n_levels - 1) if self.similarity_scale is None else self.similarity_scale


@dataclass
class EpochLog:
    epoch: int
    recon_loss: float
    hinge_loss: float
    total: float


@dataclass
class AeResult:
    encoding: np.ndarray
    log: list[EpochLog] = field(default_factory=list)

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "recon_loss", "hinge_loss", "total"])
        for e in self.log:
            w.writerow([e.epoch, repr(e.recon_loss), repr(e.hinge_loss), repr(e.total)])
        return buf.getvalue()


def build_similarity(n_levels: int) -> np.ndarray:
    if n_levels < 2:
        raise ValueError("n_levels must be >= 2")
    idx = np.arange(n_levels, dtype=np.float64)
    return np.abs(idx[:, None] - idx[None, :])


class Autoencoder:
    """Encoder N -> 2M -> M, decoder M -> 2M -> N; tanh hidden, linear outputs."""

    def __init__(self, n_levels: int, code_width: int, rng):
        h = 2 * code_width
        self.encoder = NetGraph.mlp([n_levels, h, code_width], ["tanh", "identity"], rng, name="enc")
        self.decoder = NetGraph.mlp([code_width, h, n_levels], ["tanh", "identity"], rng, name="dec")

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def weights(self):
        return self.encoder.weights() + self.decoder.weights()


def ae_loss(net: Autoencoder, s_i: np.ndarray, s_j: np.ndarray, margin: float, pair_weight: float, l2_weight: float):
    """Batch-mean pair loss plus ``l2_weight * ||W||^2``.

    Returns ``(total, recon, hinge)``; the last two are floats for logging.
    """
    k = s_i.shape[0]
    c_i = net.encoder(Tensor(s_i))
    c_j = net.encoder(Tensor(s_j))
    r_i = net.decoder(c_i) - Tensor(s_i)
    r_j = net.decoder(c_j) - Tensor(s_j)
    recon = ((r_i * r_i).sum() + (r_j * r_j).sum()) * (1.0 / k)
    hinge = relu(margin - tabs(c_i - c_j).sum(axis=1)).sum() * (1.0 / k)
    total = recon + pair_weight * hinge
    if l2_weight:
        total = total + l2_weight * sum(((w * w).sum() for w in net.weights()), Tensor(0.0))
    return total, float(recon.data), float(hinge.data)


def train_autoencoder(cfg: AeConfig) -> AeResult:
    rng = np.random.default_rng(cfg.seed)
    net = Autoencoder(cfg.n_levels, cfg.code_width, rng)
    S = build_similarity(cfg.n_levels) * cfg.resolved_scale
    optim = OptimConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed)
    groups = {"all": net.parameters()}
    pairs = np.array(list(itertools.product(range(cfg.n_levels), repeat=2)))
    margin = cfg.resolved_margin
    log = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(pairs))
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = pairs[order[start:start + cfg.batch_size]]
            zero_grads(groups)
            total, recon, hinge = ae_loss(net, S[batch[:, 0]], S[batch[:, 1]], margin, cfg.pair_weight, cfg.l2_weight)
            check_finite(total, "autoencoder loss")
            total.backward()
            sgd_step(groups, optim)
            sums += (recon, hinge, float(total.data))
            n_batches += 1
        recon_m, hinge_m, total_m = sums / n_batches
        log.append(EpochLog(epoch, recon_m, hinge_m, total_m))
    encoding = net.encoder(Tensor(S)).data
    return AeResult(encoding=encoding, log=log)


def binarize_equal_split(enc) -> codebook.CodeMatrix:
    """Top ``floor(M/2)`` entries of each row become 1; ties go to the lower column."""
    enc = np.asarray(enc, dtype=np.float64)
    n, m = enc.shape
    ones = m // 2
    order = np.argsort(-enc, axis=1, kind="stable")[:, :ones]
    bits = np.zeros((n, m), dtype=np.uint8)
    np.put_along_axis(bits, order, 1, axis=1)
    return codebook.CodeMatrix(bits)


def design_code(cfg: AeConfig) -> tuple[codebook.CodeMatrix, AeResult]:
    result = train_autoencoder(cfg)
    return binarize_equal_split(result.encoding), result


DEFAULT_GRID = {
    "margin_factor": (0.125, 0.25, 0.5),
    "pair_weight": (0.1, 1.0),
    "l2_weight": (1e-4, 1e-3),
}


@dataclass
class GridPoint:
    cfg: AeConfig
    transitions: int
    code: codebook.CodeMatrix
    result: AeResult


def grid_search(base: AeConfig, grid: dict | None = None) -> tuple[GridPoint, list[GridPoint]]:
    """Train every grid combination; keep the one with fewest binarized transitions.

    ``margin_factor`` multiplies the code width. Ties keep the earliest point.
    """
    grid = DEFAULT_GRID if grid is None else grid
    points = []
    for mf, pw, l2 in itertools.product(grid["margin_factor"], grid["pair_weight"], grid["l2_weight"]):
        cfg = replace(base, margin=mf * base.code_width, pair_weight=pw, l2_weight=l2)
        code, result = design_code(cfg)
        t = codebook.count_bit_transitions(code).total_bit_transitions
        points.append(GridPoint(cfg, t, code, result))
    best = min(points, key=lambda p: p.transitions)
    return best, points
