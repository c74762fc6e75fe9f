"""Binary hash code primitives.

A :class:`HashCode` is a fixed-length bit string stored packed (bit ``i`` is
the MSB-first ``i``-th bit, matching the on-disk index layout). A
:class:`RelaxedCode` is the real-valued pre-binarization output of the
encoder; its binarization rule depends on which output activation produced
it.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

ACTIVATIONS = ("tanh", "sigmoid", "relu")

_POPCOUNT = np.array([i.bit_count() for i in range(256)], dtype=np.uint8)


class HashCode:
    """Immutable binary code of ``k`` bits, bit-packed MSB-first."""

    __slots__ = ("k", "packed")

    def __init__(self, bits: Iterable[int]):
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("bits must be a non-empty 1-D sequence")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must all be 0 or 1")
        self.k = int(arr.size)
        packed = np.packbits(arr.astype(np.uint8))
        packed.flags.writeable = False
        self.packed = packed

    @classmethod
    def from_packed(cls, data: bytes | np.ndarray, k: int) -> "HashCode":
        """Rebuild a code from packed bytes; trailing pad bits must be zero."""
        buf = np.frombuffer(bytes(data), dtype=np.uint8)
        if k <= 0:
            raise ValueError("k must be positive")
        if buf.size != (k + 7) // 8:
            raise ValueError(f"expected {(k + 7) // 8} bytes for k={k}, got {buf.size}")
        bits = np.unpackbits(buf)
        if bits[k:].any():
            raise ValueError("nonzero padding bits beyond k")
        return cls(bits[:k])

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.packed)[: self.k]

    def __len__(self) -> int:
        return self.k

    def __eq__(self, other) -> bool:
        if not isinstance(other, HashCode):
            return NotImplemented
        return self.k == other.k and self.packed.tobytes() == other.packed.tobytes()

    def __hash__(self) -> int:
        return hash((self.k, self.packed.tobytes()))

    def __repr__(self) -> str:
        head = "".join(str(b) for b in self.bits[:16])
        tail = "..." if self.k > 16 else ""
        return f"HashCode(k={self.k}, bits={head}{tail})"


class RelaxedCode:
    """Real-valued code plus the activation that produced it.

    Value ranges are validated against the activation family: tanh outputs
    lie in [-1, 1], sigmoid in [0, 1], relu in [0, inf).
    """

    __slots__ = ("values", "activation")

    def __init__(self, values, activation: str):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("values must be a non-empty 1-D sequence")
        if not np.isfinite(vals).all():
            raise ValueError("values must be finite")
        lo, hi = {"tanh": (-1.0, 1.0), "sigmoid": (0.0, 1.0), "relu": (0.0, np.inf)}[activation]
        if (vals < lo).any() or (vals > hi).any():
            raise ValueError(f"values outside {activation} output range")
        vals = vals.copy()
        vals.flags.writeable = False
        self.values = vals
        self.activation = activation

    @property
    def k(self) -> int:
        return int(self.values.size)

    def unit_values(self) -> np.ndarray:
        """Map to [0, 1]: tanh via (x+1)/2, sigmoid as-is, relu clamped."""
        if self.activation == "tanh":
            return (self.values + 1.0) / 2.0
        if self.activation == "sigmoid":
            return self.values.copy()
        return np.clip(self.values, 0.0, 1.0)

    def unit_derivative(self) -> np.ndarray:
        """d(unit_values)/d(values), elementwise."""
        if self.activation == "tanh":
            return np.full(self.k, 0.5)
        if self.activation == "sigmoid":
            return np.ones(self.k)
        return ((self.values > 0.0) & (self.values <= 1.0)).astype(np.float64)


def binarize(code: RelaxedCode) -> HashCode:
    """Threshold a relaxed code into bits.

    tanh: bit = 1 iff value >= 0 (sign convention with sign(0) = +1);
    sigmoid: bit = 1 iff value >= 0.5; relu: bit = 1 iff value > 0, since
    relu never goes negative and an inclusive threshold would force all-ones.
    """
    v = code.values
    if code.activation == "tanh":
        bits = v >= 0.0
    elif code.activation == "sigmoid":
        bits = v >= 0.5
    else:
        bits = v > 0.0
    return HashCode(bits.astype(np.uint8))


def hamming(a: HashCode, b: HashCode) -> int:
    """Number of differing bit positions; requires equal lengths."""
    if a.k != b.k:
        raise ValueError(f"length mismatch: {a.k} vs {b.k}")
    return int(_POPCOUNT[np.bitwise_xor(a.packed, b.packed)].sum())


def packed_matrix(codes: Sequence[HashCode]) -> np.ndarray:
    """Stack packed codes into an (n, k/8) uint8 matrix for bulk scans."""
    if not codes:
        raise ValueError("no codes")
    k = codes[0].k
    if any(c.k != k for c in codes):
        raise ValueError("mixed code lengths")
    return np.stack([c.packed for c in codes])


def hamming_to_many(matrix: np.ndarray, code: HashCode) -> np.ndarray:
    """Hamming distance from ``code`` to every row of a packed matrix."""
    if matrix.shape[1] != code.packed.size:
        raise ValueError("packed width mismatch")
    xor = np.bitwise_xor(matrix, code.packed[None, :])
    if hasattr(np, "bitwise_count") and xor.shape[1] % 8 == 0:
        return np.bitwise_count(xor.view(np.uint64)).sum(axis=1, dtype=np.int64)
    return _POPCOUNT[xor].sum(axis=1, dtype=np.int64)


def vote_center(codes: Sequence[HashCode], anchor: HashCode) -> HashCode:
    """Per-bit majority over ``codes``; exact ties take the anchor's bit.

    The anchor is the original video's code, so ties resolve toward the
    original. Deterministic and permutation-invariant.
    """
    if not codes:
        raise ValueError("cannot vote over an empty code list")
    k = codes[0].k
    if any(c.k != k for c in codes) or anchor.k != k:
        raise ValueError("mixed code lengths in vote")
    ones = np.zeros(k, dtype=np.int64)
    for c in codes:
        ones += c.bits
    n = len(codes)
    majority = 2 * ones > n
    tie = 2 * ones == n
    bits = np.where(tie, anchor.bits.astype(bool), majority)
    return HashCode(bits.astype(np.uint8))


def mean_pairwise_hamming(centers: Sequence[HashCode]) -> float:
    """Mean Hamming distance over all unordered pairs of centers."""
    n = len(centers)
    if n < 2:
        raise ValueError("need at least 2 centers")
    k = centers[0].k
    if any(c.k != k for c in centers):
        raise ValueError("mixed code lengths")
    ones = np.zeros(k, dtype=np.int64)
    for c in centers:
        ones += c.bits
    # sum over pairs of per-bit disagreements: bit j contributes c_j * (n - c_j)
    total = int((ones * (n - ones)).sum())
    return total / (n * (n - 1) / 2)
