"""Analytical classifier-error model for estimating a code's regression error
without training.

Each bit's flip probability is a sum of Gaussian bumps centred on that bit's
transition midpoints ``k + 0.5``, scaled by a magnitude ``r`` and clamped to 1.
Predicted codes sampled from the model are decoded by softmax-weighted
correlation against the ±1 code table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import CodeMatrix

DEFAULT_R = 0.5
DEFAULT_SIGMA = 1.0
DEFAULT_SAMPLES_PER_LEVEL = 100


@dataclass(frozen=True)
class ErrorModel:
    r: float
    sigma: float
    n_levels: int
    transitions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def n_bits(self) -> int:
        return len(self.transitions)

    def flip_probability(self, q) -> np.ndarray:
        """Per-bit flip probabilities at 1-indexed label(s) ``q``; shape ``(..., M)``."""
        q = np.asarray(q, dtype=np.float64)
        out = np.zeros(q.shape + (self.n_bits,))
        norm = 1.0 / (self.sigma * np.sqrt(2.0 * np.pi))
        for m, mus in enumerate(self.transitions):
            if not mus:
                continue
            z = (q[..., None] - np.asarray(mus)) / self.sigma
            out[..., m] = self.r * norm * np.exp(-0.5 * z * z).sum(axis=-1)
        return np.minimum(out, 1.0)

    def flip_table(self) -> np.ndarray:
        """N x M table of flip probabilities, row ``q - 1`` for label ``q``."""
        return self.flip_probability(np.arange(1, self.n_levels + 1))


@dataclass(frozen=True)
class ErrorEstimate:
    mean_abs_error: float
    n_samples: int
    seed: int


def build_error_model(code: CodeMatrix, r: float = DEFAULT_R, sigma: float = DEFAULT_SIGMA) -> ErrorModel:
    bits = code.bits
    changes = bits[1:] != bits[:-1]
    transitions = tuple(
        tuple(float(k) + 1.5 for k in np.flatnonzero(changes[:, m])) for m in range(code.n_bits)
    )
    return ErrorModel(r=float(r), sigma=float(sigma), n_levels=code.n_levels, transitions=transitions)


def sample_predicted_code(model: ErrorModel, code: CodeMatrix, q: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= q <= code.n_levels:
        raise ValueError(f"label {q} outside 1..{code.n_levels}")
    flips = rng.random(code.n_bits) < model.flip_probability(q)
    return code.bits[q - 1] ^ flips.astype(np.uint8)


def sample_predicted_codes(model: ErrorModel, code: CodeMatrix, q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised form of :func:`sample_predicted_code` for an array of labels."""
    q = np.asarray(q, dtype=np.int64)
    probs = model.flip_table()[q - 1]
    flips = rng.random(probs.shape) < probs
    return code.bits[q - 1] ^ flips.astype(np.uint8)


def decode_weights(pred, code: CodeMatrix) -> np.ndarray:
    """Softmax over levels of the ±1 correlation between predictions and code rows."""
    pred = np.asarray(pred)
    signed_pred = 2.0 * pred.astype(np.float64) - 1.0
    scores = np.atleast_2d(signed_pred) @ code.signed().T
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return w


def genex_decode(pred, code: CodeMatrix) -> float | np.ndarray:
    """Expected label under the correlation softmax; one row or a batch of rows."""
    pred = np.asarray(pred)
    if pred.shape[-1] != code.n_bits:
        raise ValueError(f"predicted code has {pred.shape[-1]} bits, code table has {code.n_bits}")
    levels = np.arange(1, code.n_levels + 1, dtype=np.float64)
    out = decode_weights(pred, code) @ levels
    return float(out[0]) if pred.ndim == 1 else out


def round_level(values, n_levels: int) -> np.ndarray:
    """Nearest level (halves round up), clamped to ``1..N``."""
    return np.clip(np.floor(np.asarray(values) + 0.5).astype(np.int64), 1, n_levels)


def estimate_mae(code: CodeMatrix, model: ErrorModel, n_samples: int | None = None, seed: int = 0) -> ErrorEstimate:
    if n_samples is None:
        n_samples = DEFAULT_SAMPLES_PER_LEVEL * code.n_levels
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    q = rng.integers(1, code.n_levels + 1, size=n_samples)
    pred = sample_predicted_codes(model, code, q, rng)
    decoded = genex_decode(pred, code)
    return ErrorEstimate(float(np.abs(decoded - q).mean()), n_samples, seed)


def confusion_probabilities(code: CodeMatrix, model: ErrorModel, n_per_row: int = DEFAULT_SAMPLES_PER_LEVEL, seed: int = 0) -> np.ndarray:
    """Monte-Carlo ``P[i-1, j-1] = Pr(round(decode) = j | Q = i)``."""
    if n_per_row < 1:
        raise ValueError("n_per_row must be >= 1")
    n = code.n_levels
    rng = np.random.default_rng(seed)
    q = np.repeat(np.arange(1, n + 1), n_per_row)
    decoded = round_level(genex_decode(sample_predicted_codes(model, code, q, rng), code), n)
    counts = np.zeros((n, n))
    np.add.at(counts, (q - 1, decoded - 1), 1.0)
    return counts / n_per_row


def confusion_weighted_error(code: CodeMatrix, model: ErrorModel, n_per_row: int = DEFAULT_SAMPLES_PER_LEVEL, seed: int = 0) -> np.ndarray:
    """``F[i, j] = |i - j| * Pr(round(decode) = j | Q = i)``."""
    n = code.n_levels
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) * confusion_probabilities(code, model, n_per_row, seed)
