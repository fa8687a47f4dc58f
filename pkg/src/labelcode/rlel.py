"""Learned label encodings: the correlation head, its regularised loss and
diagnostics on the encoding recovered from a trained model.

Labels live on ``[1, N]`` inside the model; :class:`LabelMap` converts raw
targets in and predictions out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import codebook
from .tensornet import (
    Dense,
    NetGraph,
    Tensor,
    as_tensor,
    log_softmax,
    relu,
    softmax,
    softmax_t,
    tabs,
)


class NonFiniteLoss(FloatingPointError):
    pass


def check_finite(loss: Tensor, what: str = "loss") -> Tensor:
    v = float(loss.data)
    if not math.isfinite(v):
        raise NonFiniteLoss(f"{what} became non-finite ({v})")
    return loss


@dataclass(frozen=True)
class LabelMap:
    """Affine map from the raw label interval onto ``[1, n_levels]``."""

    low: float
    high: float
    n_levels: int

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError(f"empty label range [{self.low}, {self.high}]")
        if self.n_levels < 2:
            raise ValueError("n_levels must be >= 2")

    @property
    def step(self) -> float:
        """Raw-unit width of one quantization level."""
        return (self.high - self.low) / (self.n_levels - 1)

    def to_levels(self, y_raw) -> np.ndarray:
        y = 1.0 + (np.asarray(y_raw, dtype=np.float64) - self.low) / self.step
        return np.clip(y, 1.0, float(self.n_levels))

    def to_raw(self, y_levels) -> np.ndarray:
        return self.low + (np.asarray(y_levels, dtype=np.float64) - 1.0) * self.step

    def quantize(self, y_levels) -> np.ndarray:
        q = np.floor(np.asarray(y_levels, dtype=np.float64) + 0.5).astype(np.int64)
        return np.clip(q, 1, self.n_levels)


# -- targets and regularisers ----------------------------------------------


def soft_target(y, n_levels: int) -> np.ndarray:
    """Distribution over levels ``1..N`` decaying as ``exp(-|j - y|)``."""
    y = np.asarray(y, dtype=np.float64)
    j = np.arange(1, n_levels + 1, dtype=np.float64)
    logits = -np.abs(j - y[..., None])
    return softmax(logits, axis=-1)


def r1_loss(Z, y, scale: float = 2.0) -> Tensor:
    """Pairwise hinge ``sum_ij max(0, scale*|y_i-y_j| - ||Z_i - Z_j||_1)``.

    Sums over all ``K^2`` ordered pairs, diagonal included.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    Z = as_tensor(Z)
    y = np.asarray(y, dtype=np.float64)
    k, m = Z.shape
    diff = Z.reshape(k, 1, m) - Z.reshape(1, k, m)
    dist = tabs(diff).sum(axis=2)
    margin = scale * np.abs(y[:, None] - y[None, :])
    return relu(Tensor(margin) - dist).sum()


def r2_loss(D) -> Tensor:
    """Total variation of each row of ``D`` across adjacent levels."""
    D = as_tensor(D)
    n = D.shape[1]
    # adjacent differences as a fixed linear map keeps the op set small
    diff_op = np.zeros((n, n - 1))
    idx = np.arange(n - 1)
    diff_op[idx, idx] = 1.0
    diff_op[idx + 1, idx] = -1.0
    return tabs(D @ Tensor(diff_op)).sum()


def transitions_approx(E) -> float:
    """Real-valued bit-transition count ``sum |E[j] - E[j+1]|``."""
    E = np.asarray(E, dtype=np.float64)
    return float(np.abs(np.diff(E, axis=0)).sum())


@dataclass(frozen=True)
class RlelLossConfig:
    alpha: float = 0.1
    beta: float = 1.0
    r1_scale: float = 2.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.r1_scale <= 0:
            raise ValueError("r1_scale must be positive")


@dataclass
class HeadOutput:
    Z: Tensor
    logits: Tensor
    C: Tensor
    y_hat: Tensor


class RlelHead:
    """features -> FC(theta) -> FC(M) = Z;  softmax(Z @ D) = C;  E[j] = y_hat."""

    def __init__(self, n_in: int, theta: int, n_bits: int, n_levels: int, rng, bottleneck_activation="identity"):
        if not theta < n_bits:
            raise ValueError(f"bottleneck width theta={theta} must be < code width M={n_bits}")
        self.n_levels = n_levels
        self.fc_theta = Dense(n_in, theta, bottleneck_activation, rng=rng, name="head.theta")
        self.fc_code = Dense(theta, n_bits, "identity", rng=rng, name="head.code")
        limit = np.sqrt(6.0 / (n_bits + n_levels))
        self.D = Tensor(rng.uniform(-limit, limit, size=(n_bits, n_levels)), requires_grad=True, name="head.D")
        self._levels = Tensor(np.arange(1, n_levels + 1, dtype=np.float64).reshape(n_levels, 1))

    @property
    def n_in(self):
        return self.fc_theta.n_in

    @property
    def n_bits(self):
        return self.fc_code.n_out

    def code_parameters(self) -> list[Tensor]:
        return self.fc_theta.parameters() + self.fc_code.parameters()

    def parameters(self) -> list[Tensor]:
        return self.code_parameters() + [self.D]

    def weights(self) -> list[Tensor]:
        return [self.fc_theta.W, self.fc_code.W]

    def __call__(self, features) -> HeadOutput:
        features = as_tensor(features)
        if features.data.ndim != 2 or features.shape[1] != self.n_in:
            raise ValueError(f"features shape {features.shape} does not match head width {self.n_in}")
        Z = self.fc_code(self.fc_theta(features))
        logits = Z @ self.D
        C = softmax_t(logits)
        y_hat = (C @ self._levels).reshape(-1)
        return HeadOutput(Z=Z, logits=logits, C=C, y_hat=y_hat)


head_forward = RlelHead.__call__


def soft_ce(logits: Tensor, y, n_levels: int) -> Tensor:
    """``sum_i CE(softmax(logits_i), phi(y_i))`` computed via log-softmax."""
    return -(Tensor(soft_target(y, n_levels)) * log_softmax(logits)).sum()


def rlel_loss(out: HeadOutput, D: Tensor, y, cfg: RlelLossConfig) -> Tensor:
    n_levels = D.shape[1]
    loss = soft_ce(out.logits, y, n_levels)
    if cfg.alpha:
        loss = loss + cfg.alpha * r2_loss(D)
    if cfg.beta:
        loss = loss + cfg.beta * r1_loss(out.Z, y, cfg.r1_scale)
    return check_finite(loss, "rlel loss")


class RlelModel:
    """Backbone plus correlation head trained with the regularised soft-label loss."""

    method = "rlel"

    def __init__(self, backbone: NetGraph, head: RlelHead, loss_cfg: RlelLossConfig):
        self.backbone = backbone
        self.head = head
        self.loss_cfg = loss_cfg

    @property
    def n_levels(self):
        return self.head.n_levels

    def param_groups(self) -> dict[str, list[Tensor]]:
        return {
            "backbone": self.backbone.parameters() + self.head.code_parameters(),
            "decoder": [self.head.D],
        }

    def forward(self, x) -> HeadOutput:
        return self.head(self.backbone(x))

    def loss(self, x, y_levels) -> tuple[Tensor, np.ndarray]:
        out = self.forward(x)
        return rlel_loss(out, self.head.D, y_levels, self.loss_cfg), out.y_hat.data

    def predict(self, x) -> np.ndarray:
        return self.forward(x).y_hat.data

    def codes(self, x) -> np.ndarray:
        return self.forward(x).Z.data


# -- learned encoding -------------------------------------------------------


@dataclass
class LearnedEncoding:
    E: np.ndarray
    counts: np.ndarray

    @property
    def populated(self) -> np.ndarray:
        return self.counts > 0

    @property
    def n_levels(self) -> int:
        return self.E.shape[0]


def extract_encoding(Z, q, n_levels: int) -> LearnedEncoding:
    """Average the predicted codes per quantized label; empty levels are NaN."""
    Z = np.asarray(Z, dtype=np.float64)
    q = np.asarray(q, dtype=np.int64)
    counts = np.bincount(q - 1, minlength=n_levels)[:n_levels]
    sums = np.zeros((n_levels, Z.shape[1]))
    np.add.at(sums, q - 1, Z)
    with np.errstate(invalid="ignore", divide="ignore"):
        E = sums / counts[:, None]
    E[counts == 0] = np.nan
    return LearnedEncoding(E=E, counts=counts)


def extract_model_encoding(model, x, y_levels, label_map: LabelMap) -> LearnedEncoding:
    return extract_encoding(model.codes(x), label_map.quantize(y_levels), label_map.n_levels)


@dataclass
class EncodingDiagnostics:
    approx_transitions: float
    binary_transitions: int
    distance_corr: float | None
    corr_flag: str | None
    pairs: list[tuple[int, int, int, float]]

    def metrics(self) -> list[tuple[str, object]]:
        return [
            ("approx_transitions", self.approx_transitions),
            ("binary_transitions", self.binary_transitions),
            ("distance_corr", "" if self.distance_corr is None else self.distance_corr),
            ("distance_corr_flag", self.corr_flag or ""),
        ]


def _populated_runs(mask: np.ndarray) -> list[np.ndarray]:
    runs, start = [], None
    for i, m in enumerate(list(mask) + [False]):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append(np.arange(start, i))
            start = None
    return runs


def encoding_diagnostics(enc: LearnedEncoding) -> EncodingDiagnostics:
    levels = np.flatnonzero(enc.populated)
    if len(levels) < 2:
        raise ValueError(f"need at least 2 populated levels, have {len(levels)}")

    approx = 0.0
    binary = 0
    # adjacency only counts between consecutive populated levels
    for run in _populated_runs(enc.populated):
        if len(run) < 2:
            continue
        rows = enc.E[run]
        approx += transitions_approx(rows)
        binary += codebook.count_bit_transitions(codebook.binarize_encoding(rows)).total_bit_transitions

    pairs = []
    for a_idx, a in enumerate(levels):
        for b in levels[a_idx + 1:]:
            dist = float(np.abs(enc.E[a] - enc.E[b]).sum())
            pairs.append((int(a) + 1, int(b) + 1, int(b - a), dist))

    corr, flag = None, None
    if len(pairs) < 3:
        flag = "too_few_pairs"
    else:
        gaps = np.array([p[2] for p in pairs], dtype=np.float64)
        dists = np.array([p[3] for p in pairs])
        if np.ptp(dists) == 0 or np.ptp(gaps) == 0:
            flag = "degenerate"
        else:
            corr = float(np.corrcoef(gaps, dists)[0, 1])
    return EncodingDiagnostics(approx, binary, corr, flag, pairs)
