"""Compare a fake video against its traced original: grid-search alignment,
per-pixel difference masks, and mean IoU against ground truth.

Alignment searches scale and integer translation at quarter resolution so
the differencer tolerates recompression artifacts and cropping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

SCALE_GRID = tuple(round(0.8 + 0.05 * i, 2) for i in range(10))  # 0.8 .. 1.25


@dataclass(frozen=True)
class AlignmentSpec:
    """Best (scale, translation) found, with its normalized cross-correlation."""

    scale: float
    offset: tuple[int, int]
    score: float


def _to_gray(frame: np.ndarray) -> np.ndarray:
    f = frame.astype(np.float64) / 255.0
    return 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]


def _quarter(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    h4, w4 = h // 4, w // 4
    if h4 == 0 or w4 == 0:
        return gray
    return gray[: h4 * 4, : w4 * 4].reshape(h4, 4, w4, 4).mean(axis=(1, 3))


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    va = (a * a).sum()
    vb = (b * b).sum()
    # near-constant patches carry no alignment signal (interpolation residue
    # would otherwise correlate perfectly)
    if va < 1e-9 or vb < 1e-9:
        return 0.0
    return float((a * b).sum() / np.sqrt(va * vb))


def _warp(img: np.ndarray, scale: float, offset: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Scale about the image center, translate, sample bilinearly.

    Returns the warped image and a validity mask (False where the sample
    fell outside the source)."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    dy, dx = offset
    rows = (np.arange(h) - dy - cy) / scale + cy
    cols = (np.arange(w) - dx - cx) / scale + cx
    valid = (rows >= 0)[:, None] & (rows <= h - 1)[:, None] & (
        (cols >= 0)[None, :] & (cols <= w - 1)[None, :]
    )
    rr = np.clip(rows, 0, h - 1)
    cc = np.clip(cols, 0, w - 1)
    r0 = np.floor(rr).astype(int)
    c0 = np.floor(cc).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rr - r0
    fc = cc - c0
    if img.ndim == 3:
        fr_b = fr[:, None, None]
        fc_b = fc[None, :, None]
    else:
        fr_b = fr[:, None]
        fc_b = fc[None, :]
    top = img[r0][:, c0] * (1 - fc_b) + img[r0][:, c1] * fc_b
    bot = img[r1][:, c0] * (1 - fc_b) + img[r1][:, c1] * fc_b
    return top * (1 - fr_b) + bot * fr_b, valid


def _pair_indices(n: int, count: int = 5) -> np.ndarray:
    if n <= count:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, count).round().astype(int))


def align(fake: np.ndarray, original: np.ndarray) -> AlignmentSpec:
    """Exhaustive scale/offset search maximizing mean NCC on up to five
    evenly spaced frame pairs, at quarter resolution. Deterministic; ties
    prefer the candidate closest to the identity transform."""
    fake = np.asarray(fake)
    original = np.asarray(original)
    if fake.shape[0] == 0 or original.shape[0] == 0:
        raise ValueError("both videos must have frames")
    n = min(fake.shape[0], original.shape[0])
    idx = _pair_indices(n)
    fq = [_quarter(_to_gray(fake[i])) for i in idx]
    oq = [_quarter(_to_gray(original[i])) for i in idx]
    qh, qw = fq[0].shape
    max_dy = max(1, round(0.10 * qh))
    max_dx = max(1, round(0.10 * qw))
    candidates = [
        (s, dy, dx)
        for s in SCALE_GRID
        for dy in range(-max_dy, max_dy + 1)
        for dx in range(-max_dx, max_dx + 1)
    ]
    candidates.sort(key=lambda c: (abs(c[0] - 1.0), abs(c[1]) + abs(c[2]), c[0], c[1], c[2]))
    best = AlignmentSpec(scale=1.0, offset=(0, 0), score=0.0)
    best_score = -np.inf
    for s, dy, dx in candidates:
        scores = []
        for f, o in zip(fq, oq):
            warped, valid = _warp(o, s, (dy, dx))
            if valid.sum() < 4:
                scores.append(0.0)
                continue
            scores.append(_ncc(f[valid], warped[valid]))
        mean_score = float(np.mean(scores))
        if mean_score > best_score:
            best_score = mean_score
            best = AlignmentSpec(scale=s, offset=(dy * 4, dx * 4), score=mean_score)
    return best


def diff_mask(
    fake: np.ndarray,
    original: np.ndarray,
    spec: AlignmentSpec,
    tau: float = 0.08,
    radius: int = 1,
) -> np.ndarray:
    """Per-frame tamper masks: warp the original onto the fake, threshold the
    max-channel absolute difference at ``tau``, then morphologically open and
    close with a (2r+1) square to drop speckle. Returns (F, H, W) bool."""
    fake = np.asarray(fake)
    original = np.asarray(original)
    if fake.shape[1:] != original.shape[1:]:
        raise ValueError(f"resolution mismatch: {fake.shape[1:]} vs {original.shape[1:]}")
    n = min(fake.shape[0], original.shape[0])
    masks = np.zeros((n,) + fake.shape[1:3], dtype=bool)
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool) if radius > 0 else None
    off = (spec.offset[0], spec.offset[1])
    for i in range(n):
        warped, valid = _warp(original[i].astype(np.float64) / 255.0, spec.scale, off)
        d = np.abs(fake[i].astype(np.float64) / 255.0 - warped).max(axis=2)
        m = (d > tau) & valid
        if structure is not None:
            m = ndimage.binary_opening(m, structure=structure)
            m = ndimage.binary_closing(m, structure=structure)
        masks[i] = m
    return masks


def miou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-frame intersection-over-union. A frame whose union is empty
    (nothing tampered, nothing predicted) counts as 1.0."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred = pred[None]
        gt = gt[None]
    scores = []
    for p, g in zip(pred, gt):
        union = (p | g).sum()
        if union == 0:
            scores.append(1.0)
        else:
            scores.append((p & g).sum() / union)
    return float(np.mean(scores))
