"""Reference regressors on the same backbone: direct L1/L2 regression,
multiclass classification with soft labels, and fixed binary codes (BEL)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import codebook
from .rlel import check_finite, soft_ce
from .tensornet import Dense, NetGraph, Tensor, as_tensor, sigmoid, softmax_t, softplus, tabs


@dataclass(frozen=True)
class BaselineKind:
    name: str
    label_scale: float | None = None
    code: codebook.CodeMatrix | None = None

    def __post_init__(self):
        if self.name not in ("direct_l1", "direct_l2", "multiclass", "bel"):
            raise ValueError(f"unknown baseline {self.name!r}")
        if self.name == "bel" and self.code is None:
            raise ValueError("bel baseline needs a code matrix")


def direct_forward_loss(head: Dense, features, y_scaled, kind: str = "direct_l2") -> tuple[Tensor, np.ndarray]:
    """Single-output regression; loss summed over the batch in scaled label space."""
    pred = head(as_tensor(features)).reshape(-1)
    resid = pred - Tensor(np.asarray(y_scaled, dtype=np.float64))
    if kind == "direct_l1":
        loss = tabs(resid).sum()
    elif kind == "direct_l2":
        loss = (resid * resid).sum()
    else:
        raise ValueError(f"not a direct regression kind: {kind!r}")
    return check_finite(loss, kind), pred.data


def expected_level(C: Tensor) -> Tensor:
    n = C.shape[1]
    return (C @ Tensor(np.arange(1, n + 1, dtype=np.float64).reshape(n, 1))).reshape(-1)


def multiclass_forward_loss(head: Dense, features, y_levels) -> tuple[Tensor, np.ndarray]:
    logits = head(as_tensor(features))
    n = logits.shape[1]
    loss = soft_ce(logits, y_levels, n)
    return check_finite(loss, "multiclass loss"), expected_level(softmax_t(logits)).data


def bel_decode_matrix(code: codebook.CodeMatrix) -> np.ndarray:
    """Frozen M x N decoder whose column ``i`` is the ±1 code of level ``i``."""
    return code.signed().T.copy()


def bel_forward_loss(head: NetGraph, features, y_levels, code: codebook.CodeMatrix) -> tuple[Tensor, np.ndarray]:
    """Binary cross-entropy of sigmoid outputs against the code row of ``Q_i``.

    The prediction decodes ``2*sigmoid(Z) - 1`` against the frozen ±1 code
    with a softmax over correlations followed by the expectation.
    """
    logits = head(as_tensor(features))
    q = np.clip(np.floor(np.asarray(y_levels, dtype=np.float64) + 0.5).astype(np.int64), 1, code.n_levels)
    targets = code.bits[q - 1].astype(np.float64)
    # BCE with logits: softplus(z) - t*z
    loss = (softplus(logits) - Tensor(targets) * logits).sum()
    check_finite(loss, "bel loss")
    return loss, bel_decode(sigmoid(logits).data, code)


def bel_decode(probs, code: codebook.CodeMatrix) -> np.ndarray:
    signed = 2.0 * np.asarray(probs, dtype=np.float64) - 1.0
    corr = signed @ bel_decode_matrix(code)
    corr -= corr.max(axis=1, keepdims=True)
    w = np.exp(corr)
    w /= w.sum(axis=1, keepdims=True)
    return w @ np.arange(1, code.n_levels + 1, dtype=np.float64)


class DirectModel:
    def __init__(self, backbone: NetGraph, kind: str, n_levels: int, rng, label_scale: float | None = None):
        self.method = kind
        self.backbone = backbone
        self.kind = kind
        self.n_levels = n_levels
        self.head = Dense(backbone.n_out, 1, "identity", rng=rng, name="head.out")
        self.label_scale = label_scale if label_scale is not None else 1.0 / n_levels

    def param_groups(self):
        return {"backbone": self.backbone.parameters() + self.head.parameters()}

    def loss(self, x, y_levels):
        loss, pred = direct_forward_loss(self.head, self.backbone(x), self.label_scale * np.asarray(y_levels), self.kind)
        return loss, pred / self.label_scale

    def predict(self, x):
        return self.head(self.backbone(x)).data.reshape(-1) / self.label_scale


class MulticlassModel:
    method = "multiclass"

    def __init__(self, backbone: NetGraph, n_levels: int, rng, depth: int = 1, hidden: int = 10):
        self.backbone = backbone
        self.n_levels = n_levels
        widths = [backbone.n_out] + [hidden] * (depth - 1) + [n_levels]
        self.head = NetGraph.mlp(widths, ["identity"] * depth, rng, name="head.fc")

    def param_groups(self):
        return {"backbone": self.backbone.parameters() + self.head.parameters()}

    def loss(self, x, y_levels):
        return multiclass_forward_loss(self.head, self.backbone(x), y_levels)

    def predict(self, x):
        return expected_level(softmax_t(self.head(self.backbone(x)))).data


class BelModel:
    method = "bel"

    def __init__(self, backbone: NetGraph, code: codebook.CodeMatrix, rng, theta: int = 10):
        self.backbone = backbone
        self.code = code
        self.n_levels = code.n_levels
        self.head = NetGraph.mlp([backbone.n_out, theta, code.n_bits], ["identity", "identity"], rng, name="head.bel")

    def param_groups(self):
        return {"backbone": self.backbone.parameters() + self.head.parameters()}

    def loss(self, x, y_levels):
        return bel_forward_loss(self.head, self.backbone(x), y_levels, self.code)

    def predict(self, x):
        return bel_decode(sigmoid(self.head(self.backbone(x))).data, self.code)

    def codes(self, x):
        return self.head(self.backbone(x)).data
