"""Triplet-style hashing loss over a batch of relaxed codes and the current
set of binary group centers.

Each code is compared against every center: the matching pairs pull the code
toward its own center (mean absolute difference), the non-matching pairs push
it toward the complement of the other centers (one minus mean absolute
difference). The two sums are normalized by their pair counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from hashtrace.codes import HashCode, RelaxedCode


@dataclass(frozen=True)
class CenterSet:
    """One binary center per group, all of the same bit length."""

    centers: Mapping[int, HashCode]
    k: int

    def __post_init__(self):
        if not self.centers:
            raise ValueError("CenterSet must not be empty")
        for gid, code in self.centers.items():
            if code.k != self.k:
                raise ValueError(f"center for group {gid} has k={code.k}, expected {self.k}")

    def group_ids(self) -> list[int]:
        return sorted(self.centers)

    def bit_matrix(self) -> np.ndarray:
        """(G, k) float matrix of center bits, rows ordered by group id."""
        return np.stack([self.centers[g].bits for g in self.group_ids()]).astype(np.float64)

    def __len__(self):
        return len(self.centers)


@dataclass(frozen=True)
class LabeledCode:
    """A relaxed code mapped to [0, 1] plus the group it belongs to."""

    values: np.ndarray
    group_id: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty vector")
        if (v < 0).any() or (v > 1).any():
            raise ValueError("labeled code values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_relaxed(cls, code: RelaxedCode, group_id: int) -> "LabeledCode":
        return cls(values=code.unit_values(), group_id=group_id)


def _check_pair(h: np.ndarray, c: HashCode) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size != c.k:
        raise ValueError(f"length mismatch: code {h.size} vs center {c.k}")
    return h


def intra_loss(h: np.ndarray, c: HashCode) -> float:
    """Mean absolute difference to the own center, in [0, 1]."""
    h = _check_pair(h, c)
    return float(np.abs(h - c.bits).mean())


def inter_loss(h: np.ndarray, c: HashCode) -> float:
    """One minus the mean absolute difference to a foreign center; zero when
    the code is the bitwise complement of that center."""
    h = _check_pair(h, c)
    return 1.0 - float(np.abs(h - c.bits).mean())


def hash_triplet_loss(
    batch: Sequence[LabeledCode],
    centers: CenterSet,
    intra_weight: float = 1.0,
    inter_weight: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Loss and exact subgradients with respect to each code's values.

    Returns ``(loss, grads)`` with ``grads`` shaped (batch, k). The absolute
    value's derivative at exactly zero is taken as zero. The weights exist
    for ablation runs; both default to 1.
    """
    if not batch:
        raise ValueError("batch must not be empty")
    k = centers.k
    ids = centers.group_ids()
    row_of = {gid: i for i, gid in enumerate(ids)}
    for lc in batch:
        if lc.group_id not in row_of:
            raise ValueError(f"no center for group {lc.group_id}")
        if lc.values.size != k:
            raise ValueError(f"code length {lc.values.size} != centers k={k}")

    H = np.stack([lc.values for lc in batch])  # (B, k)
    C = centers.bit_matrix()  # (G, k)
    B, G = H.shape[0], C.shape[0]
    diff = H[:, None, :] - C[None, :, :]  # (B, G, k)
    absmean = np.abs(diff).mean(axis=2)  # (B, G)
    same = np.zeros((B, G), dtype=bool)
    for b, lc in enumerate(batch):
        same[b, row_of[lc.group_id]] = True

    m = int(same.sum())
    n = B * G - m
    if m == 0 or n == 0:
        raise ValueError(f"degenerate batch: {m} matching and {n} non-matching pairs")

    loss = (
        intra_weight * float(absmean[same].sum()) / m
        + inter_weight * float((1.0 - absmean[~same]).sum()) / n
    )

    signs = np.sign(diff)  # sign(0) = 0, the chosen subgradient at kinks
    w = np.where(same, intra_weight / m, -inter_weight / n)[:, :, None]
    grads = (signs * w).sum(axis=1) / k
    return loss, grads
