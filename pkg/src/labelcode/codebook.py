"""Binary label-code matrices: generators, metrics and a line-oriented file format.

Labels are 1-indexed: row ``q - 1`` of a matrix holds the code for label ``q``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class CodeFormatError(ValueError):
    """Raised when a code-matrix file cannot be parsed."""


@dataclass(frozen=True)
class CodeMatrix:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"code matrix must be 2-D, got shape {bits.shape}")
        if bits.shape[0] < 2 or bits.shape[1] < 1:
            raise ValueError(f"need n_levels >= 2 and n_bits >= 1, got {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("code matrix entries must be 0 or 1")
        bits = bits.astype(np.uint8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_levels(self) -> int:
        return self.bits.shape[0]

    @property
    def n_bits(self) -> int:
        return self.bits.shape[1]

    def row(self, q: int) -> np.ndarray:
        """Code for the 1-indexed label ``q``."""
        if not 1 <= q <= self.n_levels:
            raise IndexError(f"label {q} outside 1..{self.n_levels}")
        return self.bits[q - 1]

    def signed(self) -> np.ndarray:
        """Bits mapped to {-1, +1} as float64."""
        return 2.0 * self.bits.astype(np.float64) - 1.0

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool((self.bits == other.bits).all())

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))


@dataclass(frozen=True)
class CodeMetrics:
    total_bit_transitions: int
    min_pairwise_hamming: int
    per_bit_transitions: tuple[int, ...] = field(default_factory=tuple)


def _check_levels(n_levels: int) -> None:
    if n_levels < 2:
        raise ValueError(f"n_levels must be >= 2, got {n_levels}")


def unary_code(n_levels: int) -> CodeMatrix:
    """Thresholds: bit k (1-indexed) is set iff label > k."""
    _check_levels(n_levels)
    q = np.arange(1, n_levels + 1)[:, None]
    k = np.arange(1, n_levels)[None, :]
    return CodeMatrix((q > k).astype(np.uint8))


def johnson_code(n_levels: int) -> CodeMatrix:
    """Twisted-ring counter, truncated to ``n_levels`` states when odd."""
    _check_levels(n_levels)
    m = -(-n_levels // 2)
    rows = []
    state = [0] * m
    for step in range(n_levels):
        rows.append(list(state))
        # fill with ones from the left for m steps, then clear from the left
        if step < m:
            state[step] = 1
        else:
            state[step - m] = 0
    return CodeMatrix(np.array(rows, dtype=np.uint8))


def sylvester_hadamard(order: int) -> np.ndarray:
    """±1 Hadamard matrix of a power-of-two ``order``."""
    if order < 1 or order & (order - 1):
        raise ValueError(f"order must be a power of two, got {order}")
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def hadamard_code(n_levels: int) -> CodeMatrix:
    _check_levels(n_levels)
    order = 1 << (n_levels - 1).bit_length()
    h = sylvester_hadamard(order)[:n_levels]
    return CodeMatrix((h > 0).astype(np.uint8))


def random_code(n_levels: int, n_bits: int, seed: int) -> CodeMatrix:
    if n_bits < 1:
        raise ValueError(f"n_bits must be >= 1, got {n_bits}")
    _check_levels(n_levels)
    rng = np.random.default_rng(seed)
    return CodeMatrix(rng.integers(0, 2, size=(n_levels, n_bits), dtype=np.uint8))


def hamming_distance(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"rows differ in length: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def pairwise_hamming(code: CodeMatrix) -> np.ndarray:
    """N x N matrix of Hamming distances between rows."""
    b = code.bits.astype(np.int64)
    return (b[:, None, :] != b[None, :, :]).sum(axis=2)


def count_bit_transitions(code: CodeMatrix) -> CodeMetrics:
    b = code.bits.astype(np.int64)
    per_bit = np.abs(np.diff(b, axis=0)).sum(axis=0)
    d = pairwise_hamming(code)
    off_diag = d[~np.eye(code.n_levels, dtype=bool)]
    return CodeMetrics(
        total_bit_transitions=int(per_bit.sum()),
        min_pairwise_hamming=int(off_diag.min()),
        per_bit_transitions=tuple(int(v) for v in per_bit),
    )


def binarize_bits(enc, threshold: float = 0.0) -> np.ndarray:
    """Entries strictly above ``threshold`` become 1; ties go to 0."""
    return (np.asarray(enc, dtype=np.float64) > threshold).astype(np.uint8)


def binarize_encoding(enc, threshold: float = 0.0) -> CodeMatrix:
    return CodeMatrix(binarize_bits(enc, threshold))


# -- file format ------------------------------------------------------------
#
#   N M
#   <N lines of exactly M characters from {0,1}>
#
# ASCII, newline terminated, no trailing whitespace.


def format_code(code: CodeMatrix) -> str:
    lines = [f"{code.n_levels} {code.n_bits}"]
    lines.extend("".join("1" if v else "0" for v in row) for row in code.bits)
    return "\n".join(lines) + "\n"


def parse_code(text: str) -> CodeMatrix:
    if not text.endswith("\n"):
        raise CodeFormatError("file must be newline-terminated")
    lines = text[:-1].split("\n")
    header = lines[0]
    parts = header.split(" ")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise CodeFormatError(f"malformed header {header!r}: expected 'N M'")
    n, m = int(parts[0]), int(parts[1])
    if n < 2 or m < 1:
        raise CodeFormatError(f"header declares invalid shape N={n} M={m}")
    rows = lines[1:]
    if len(rows) != n:
        raise CodeFormatError(f"header declares {n} rows, found {len(rows)}")
    bits = np.empty((n, m), dtype=np.uint8)
    for idx, row in enumerate(rows, start=1):
        bad = set(row) - {"0", "1"}
        if bad:
            raise CodeFormatError(f"row {idx}: invalid characters {sorted(bad)!r}")
        if len(row) != m:
            raise CodeFormatError(f"row {idx}: length {len(row)} != M={m}")
        bits[idx - 1] = [c == "1" for c in row]
    return CodeMatrix(bits)


def write_code(code: CodeMatrix, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_code(code))


def read_code(path: str | os.PathLike) -> CodeMatrix:
    with open(path, "r", encoding="ascii", newline="") as fh:
        return parse_code(fh.read())


GENERATORS = {
    "unary": unary_code,
    "johnson": johnson_code,
    "hadamard": hadamard_code,
}
