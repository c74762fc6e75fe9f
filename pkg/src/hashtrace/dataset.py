"""Grouped video dataset: manifest ingestion, frame descriptors, clip
sampling, perturbations, splicing, and synthetic data generation.

A dataset is a directory tree of frame directories (binary P6 files named
``frame_%06d.ppm``, optional P5 masks ``mask_%06d.pgm``) plus a TSV manifest
with one row per video::

    group_id<TAB>role(original|fake)<TAB>relative_path<TAB>label

Every group pairs one original video with at least two derived fakes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np
from scipy import ndimage

from hashtrace import pnm

LUMA_GRID = 8
HIST_BINS = 16
DESCRIPTOR_DIM = LUMA_GRID * LUMA_GRID + 3 * HIST_BINS  # 112

PERTURBATIONS = ("detail", "gaussian_blur", "box_blur", "median", "crop")

# FeatureSequence: an (clip_len, DESCRIPTOR_DIM) float64 array of per-frame
# descriptors, in frame order.
FeatureSequence = np.ndarray


class ManifestError(ValueError):
    """Raised when a dataset manifest is malformed or inconsistent."""


@dataclass(frozen=True)
class VideoRef:
    """One video: a frame directory, its frame count, and a display label."""

    path: Path
    frame_count: int
    label: str

    def frame_paths(self) -> list[Path]:
        return pnm.list_frames(self.path)

    def load_frames(self) -> np.ndarray:
        """All frames as an (F, H, W, 3) uint8 array."""
        return np.stack([pnm.read_ppm(p) for p in self.frame_paths()])

    def mask_paths(self) -> list[Path]:
        return pnm.list_masks(self.path)


@dataclass(frozen=True)
class Group:
    group_id: int
    original: VideoRef
    fakes: tuple[VideoRef, ...]

    def __post_init__(self):
        if not self.fakes:
            raise ManifestError(f"group {self.group_id}: no fakes")


@dataclass(frozen=True)
class GroupSet:
    """All groups of a dataset, ordered by group id."""

    groups: tuple[Group, ...]

    def __post_init__(self):
        ids = [g.group_id for g in self.groups]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate group ids")
        if ids != sorted(ids):
            raise ManifestError("groups must be sorted by group_id")
        if ids != list(range(len(ids))):
            raise ManifestError("group ids must be dense from 0")
        for g in self.groups:
            if len(g.fakes) < 2:
                raise ManifestError(f"group {g.group_id}: needs at least 2 fakes")

    @property
    def m(self) -> int:
        """Number of originals (= number of groups)."""
        return len(self.groups)

    @property
    def n_fakes(self) -> int:
        return sum(len(g.fakes) for g in self.groups)

    @property
    def z(self) -> int:
        """Total video count."""
        return self.m + self.n_fakes

    def __iter__(self):
        return iter(self.groups)

    def __len__(self):
        return len(self.groups)


def _video_ref(root: Path, rel: str, label: str, group_id: int) -> VideoRef:
    directory = root / rel
    if not directory.is_dir():
        raise ManifestError(f"group {group_id}: dangling path {rel!r}")
    frames = pnm.list_frames(directory)
    if not frames:
        raise ManifestError(f"group {group_id}: no frames under {rel!r}")
    return VideoRef(path=directory, frame_count=len(frames), label=label)


def load_manifest(path) -> GroupSet:
    """Parse and validate a manifest TSV; rows may appear in any order."""
    manifest = Path(path)
    if not manifest.is_file():
        raise ManifestError(f"manifest {manifest} does not exist")
    root = manifest.parent
    originals: dict[int, VideoRef] = {}
    fakes: dict[int, list[VideoRef]] = {}
    for lineno, raw in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"line {lineno}: expected 4 tab-separated fields")
        gid_s, role, rel, label = parts
        try:
            gid = int(gid_s)
        except ValueError:
            raise ManifestError(f"line {lineno}: bad group id {gid_s!r}") from None
        ref = _video_ref(root, rel, label, gid)
        if role == "original":
            if gid in originals:
                raise ManifestError(f"group {gid}: duplicate original")
            originals[gid] = ref
        elif role == "fake":
            fakes.setdefault(gid, []).append(ref)
        else:
            raise ManifestError(f"line {lineno}: unknown role {role!r}")
    groups = []
    for gid in sorted(set(originals) | set(fakes)):
        if gid not in originals:
            raise ManifestError(f"group {gid}: no original")
        if gid not in fakes:
            raise ManifestError(f"group {gid}: no fakes")
        groups.append(Group(group_id=gid, original=originals[gid], fakes=tuple(fakes[gid])))
    if not groups:
        raise ManifestError("manifest is empty")
    return GroupSet(groups=tuple(groups))


# ---------------------------------------------------------------------------
# Descriptors and clip sampling
# ---------------------------------------------------------------------------


def frame_descriptor(frame: np.ndarray) -> np.ndarray:
    """Deterministic per-frame descriptor: 8x8 block-mean luminance grid
    (each value in [0, 1]) followed by three 16-bin normalized channel
    histograms (each channel sums to 1)."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 frame")
    h, w = frame.shape[:2]
    luma = (
        0.299 * frame[:, :, 0] + 0.587 * frame[:, :, 1] + 0.114 * frame[:, :, 2]
    ) / 255.0
    rows = (np.arange(LUMA_GRID + 1) * h) // LUMA_GRID
    cols = (np.arange(LUMA_GRID + 1) * w) // LUMA_GRID
    grid = np.empty(LUMA_GRID * LUMA_GRID)
    for i in range(LUMA_GRID):
        for j in range(LUMA_GRID):
            block = luma[rows[i] : rows[i + 1], cols[j] : cols[j + 1]]
            grid[i * LUMA_GRID + j] = block.mean() if block.size else 0.0
    hists = np.empty(3 * HIST_BINS)
    npix = h * w
    for c in range(3):
        counts = np.bincount(frame[:, :, c].reshape(-1) >> 4, minlength=HIST_BINS)
        hists[c * HIST_BINS : (c + 1) * HIST_BINS] = counts / npix
    return np.concatenate([grid, hists])


def descriptors_from_frames(frames: np.ndarray) -> np.ndarray:
    """Descriptors for a stack of frames, shape (F, DESCRIPTOR_DIM)."""
    return np.stack([frame_descriptor(f) for f in frames])


def video_descriptors(video: VideoRef, cache: dict | None = None) -> np.ndarray:
    """Per-frame descriptors of a video, optionally memoized by path."""
    key = str(video.path)
    if cache is not None and key in cache:
        return cache[key]
    desc = np.stack([frame_descriptor(pnm.read_ppm(p)) for p in video.frame_paths()])
    if cache is not None:
        cache[key] = desc
    return desc


def clip_from_descriptors(
    descriptors: np.ndarray, clip_len: int, stride: int, seed: int
) -> FeatureSequence:
    """Pick a strided window of ``clip_len`` descriptor rows, start offset
    chosen uniformly by a generator seeded with ``seed``."""
    if clip_len < 1 or stride < 1:
        raise ValueError("clip_len and stride must be positive")
    span = (clip_len - 1) * stride + 1
    n = descriptors.shape[0]
    if n < span:
        raise ValueError(f"too few frames: have {n}, clip needs {span}")
    starts = n - span + 1
    rng = np.random.default_rng(seed)
    start = int(rng.integers(starts))
    idx = start + stride * np.arange(clip_len)
    return descriptors[idx].copy()


def sample_clip(
    video: VideoRef, clip_len: int, stride: int, seed: int, cache: dict | None = None
) -> FeatureSequence:
    """Sample a descriptor clip from a video; deterministic given ``seed``."""
    return clip_from_descriptors(video_descriptors(video, cache), clip_len, stride, seed)


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def _separable_filter(frame: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = frame.astype(np.float64)
    for axis in (0, 1):
        out = ndimage.correlate1d(out, w, axis=axis, mode="reflect")
    return out


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W[, C]) float array, half-pixel centers."""
    in_h, in_w = img.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _check_kernel(magnitude) -> int:
    k = int(magnitude)
    if k != magnitude or k < 3 or k % 2 == 0:
        raise ValueError(f"kernel size must be an odd integer >= 3, got {magnitude}")
    return k


def perturb(frames, kind: str, magnitude=None, *, sigma: float = 1.0) -> np.ndarray:
    """Apply a per-frame perturbation to an (F, H, W, 3) uint8 stack.

    ``magnitude`` is the kernel size for the filter kinds (default 3) and the
    border fraction for ``crop`` (default 0.3). Cropping removes the border
    and rescales bilinearly back to the original resolution so downstream
    tensor shapes stay constant.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[3] != 3 or frames.dtype != np.uint8:
        raise ValueError("expected an (F, H, W, 3) uint8 frame stack")
    if kind not in PERTURBATIONS:
        raise ValueError(f"unknown perturbation {kind!r}")

    if kind == "crop":
        frac = 0.3 if magnitude is None else float(magnitude)
        if not (0.0 < frac <= 0.5):
            raise ValueError(f"crop fraction must be in (0, 0.5], got {frac}")
        h, w = frames.shape[1:3]
        bh, bw = int(round(h * frac)), int(round(w * frac))
        if h - 2 * bh < 1 or w - 2 * bw < 1:
            raise ValueError(f"crop fraction {frac} leaves no pixels")
        out = np.empty_like(frames)
        for i, f in enumerate(frames):
            region = f[bh : h - bh, bw : w - bw].astype(np.float64)
            out[i] = _to_uint8(bilinear_resize(region, h, w))
        return out

    size = _check_kernel(3 if magnitude is None else magnitude)
    out = np.empty_like(frames)
    if kind == "median":
        for i, f in enumerate(frames):
            for c in range(3):
                out[i, :, :, c] = ndimage.median_filter(f[:, :, c], size=size, mode="reflect")
        return out

    if kind == "gaussian_blur":
        w1d = _gaussian_kernel(size, sigma)
    else:  # box_blur and the blur inside detail
        w1d = np.full(size, 1.0 / size)
    for i, f in enumerate(frames):
        blurred = np.stack([_separable_filter(f[:, :, c], w1d) for c in range(3)], axis=-1)
        if kind == "detail":
            # unsharp mask: add back what the blur removed
            sharp = f.astype(np.float64) + (f.astype(np.float64) - blurred)
            out[i] = _to_uint8(sharp)
        else:
            out[i] = _to_uint8(blurred)
    return out


# ---------------------------------------------------------------------------
# Splicing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpliceSpec:
    """Object-over-host composite: scale factor, paste position, and the
    object frame/mask sequence (mask nonzero where the object is opaque)."""

    scale: float
    pos: tuple[int, int]
    object_frames: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not self.object_frames:
            raise ValueError("object_frames must be non-empty")


def _nearest_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = img.shape[:2]
    ys = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(int), in_h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(int), in_w - 1)
    return img[ys][:, xs]


def synth_splice(host: np.ndarray, spec: SpliceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Composite a scaled object sequence onto the first frames of a host.

    Returns the spliced frames (one per object frame) and boolean masks that
    mark exactly the composited pixels.
    """
    host = np.asarray(host)
    if host.ndim != 4 or host.dtype != np.uint8:
        raise ValueError("expected an (F, H, W, 3) uint8 host stack")
    m_obj = len(spec.object_frames)
    if m_obj >= host.shape[0]:
        raise ValueError("object sequence must be shorter than the host video")
    hh, hw = host.shape[1:3]
    r0, c0 = spec.pos
    fakes = np.empty((m_obj, hh, hw, 3), dtype=np.uint8)
    masks = np.zeros((m_obj, hh, hw), dtype=bool)
    for i, (obj, mask) in enumerate(spec.object_frames):
        obj = np.asarray(obj, dtype=np.uint8)
        mask = np.asarray(mask)
        oh = max(1, int(round(obj.shape[0] * spec.scale)))
        ow = max(1, int(round(obj.shape[1] * spec.scale)))
        if r0 < 0 or c0 < 0 or r0 + oh > hh or c0 + ow > hw:
            raise ValueError(
                f"frame {i}: scaled object ({oh}x{ow} at {spec.pos}) exceeds host bounds"
            )
        sobj = _nearest_resize(obj, oh, ow)
        smask = _nearest_resize(mask.astype(np.uint8), oh, ow).astype(bool)
        frame = host[i].copy()
        window = frame[r0 : r0 + oh, c0 : c0 + ow]
        window[smask] = sobj[smask]
        fakes[i] = frame
        masks[i, r0 : r0 + oh, c0 : c0 + ow] = smask
    return fakes, masks


# ---------------------------------------------------------------------------
# Synthetic dataset generation
# ---------------------------------------------------------------------------

MIN_EDIT_FRACTION = 0.01
MAX_EDIT_FRACTION = 0.40
SEPARATION_MARGIN = 1.8  # min pairwise L2 between originals' mean descriptors


@dataclass
class _GroupStyle:
    """Per-group rendering parameters for one procedurally drawn scene."""

    color_a: np.ndarray
    color_b: np.ndarray
    freq: tuple[float, float]
    phase: float
    obj_color: np.ndarray
    radius: int
    orbit_center: np.ndarray
    orbit_radius: float
    omega: float
    phi: float


def _hue_to_rgb(hue: float, value: float = 1.0, sat: float = 1.0) -> np.ndarray:
    h = (hue % 1.0) * 6.0
    i = int(h)
    f = h - i
    p, q, t = value * (1 - sat), value * (1 - sat * f), value * (1 - sat * (1 - f))
    rgb = [
        (value, t, p), (q, value, p), (p, value, t),
        (p, q, value), (t, p, value), (value, p, q),
    ][i % 6]
    return np.array(rgb) * 255.0


_GOLDEN = 0.6180339887498949


def _van_der_corput(i: int) -> float:
    """Base-2 radical inverse; gives maximally spread points in [0, 1)."""
    x, denom = 0.0, 1.0
    while i:
        denom *= 2.0
        i, bit = divmod(i, 2)
        x += bit / denom
    return x


def _group_style(gid: int, rng: np.random.Generator, size: int, trial: int = 0) -> _GroupStyle:
    """Per-group scene parameters. Brightness follows a low-discrepancy grid
    and hue a golden-ratio orbit, so any two originals are visually (and
    descriptor-wise) well separated; the rest is seeded jitter. ``trial``
    nudges the hue when a re-render is needed to restore separation."""
    hue = (gid * _GOLDEN + trial * 0.11) % 1.0
    brightness = 0.15 + 0.8 * _van_der_corput(gid + 1)
    span = 0.55 + 0.4 * ((gid // 2) % 2)
    lo = max(0.05, brightness - 0.45 * span)
    hi = min(1.0, brightness + 0.45 * span)
    color_a = _hue_to_rgb(hue, value=lo, sat=0.95)
    color_b = _hue_to_rgb(hue + 0.38, value=hi, sat=0.45)
    obj_color = _hue_to_rgb(hue + 0.5, value=1.0 - brightness, sat=1.0)
    # oriented plane wave, unique direction and magnitude per group
    theta = (gid * _GOLDEN * math.pi + trial * 0.3) % math.pi
    mag = 0.75 + 3.0 * _van_der_corput(3 * gid + 2) + float(rng.uniform(-0.1, 0.1))
    fx = mag * math.cos(theta)
    fy = mag * math.sin(theta)
    radius = int(rng.integers(max(3, size // 10), max(4, size // 7)))
    margin = radius + 2
    orbit_radius = float(rng.uniform(size * 0.1, size * 0.25))
    lo = margin + orbit_radius
    hi = size - margin - orbit_radius
    if hi <= lo:
        lo, hi = size / 2 - 1, size / 2 + 1
    orbit_center = rng.uniform(lo, hi, size=2)
    return _GroupStyle(
        color_a=color_a,
        color_b=color_b,
        freq=(fx, fy),
        phase=float(rng.uniform(0, 2 * math.pi)),
        obj_color=obj_color,
        radius=radius,
        orbit_center=orbit_center,
        orbit_radius=orbit_radius,
        omega=float(rng.uniform(0.2, 0.7)) * (1 if rng.integers(2) else -1),
        phi=float(rng.uniform(0, 2 * math.pi)),
    )


def _background(style: _GroupStyle, size: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    wave = 0.5 + 0.5 * np.sin(
        2 * math.pi * (style.freq[0] * xx / size + style.freq[1] * yy / size) + style.phase
    )
    img = style.color_a[None, None, :] + wave[:, :, None] * (
        style.color_b - style.color_a
    )[None, None, :]
    return img


def _object_center(style: _GroupStyle, t: int) -> tuple[float, float]:
    cy = style.orbit_center[0] + style.orbit_radius * math.sin(style.omega * t + style.phi)
    cx = style.orbit_center[1] + style.orbit_radius * math.cos(style.omega * t + style.phi)
    return cy, cx


def _disk_mask(size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def _render_original(style: _GroupStyle, size: int, n_frames: int) -> np.ndarray:
    bg = _background(style, size)
    frames = np.empty((n_frames, size, size, 3), dtype=np.uint8)
    for t in range(n_frames):
        img = bg.copy()
        cy, cx = _object_center(style, t)
        disk = _disk_mask(size, cy, cx, style.radius)
        img[disk] = style.obj_color
        frames[t] = _to_uint8(img)
    return frames


def _changed_fraction(a: np.ndarray, b: np.ndarray) -> float:
    return float((a != b).any(axis=-1).mean())


def _fake_recolor(orig: np.ndarray, rng: np.random.Generator, heavy: bool = False) -> np.ndarray:
    """Invert one channel (or two, for heavy edits) inside a random region."""
    size = orig.shape[1]
    lo, hi = (0.40, 0.62) if heavy else (0.15, 0.55)
    for _ in range(50):
        h = int(rng.integers(int(size * lo), int(size * hi)))
        w = int(rng.integers(int(size * lo), int(size * hi)))
        r0 = int(rng.integers(0, size - h + 1))
        c0 = int(rng.integers(0, size - w + 1))
        channels = rng.choice(3, size=2 if heavy else 1, replace=False)
        frac = h * w / (size * size)
        if MIN_EDIT_FRACTION <= frac <= MAX_EDIT_FRACTION:
            out = orig.copy()
            for channel in channels:
                region = out[:, r0 : r0 + h, c0 : c0 + w, channel]
                out[:, r0 : r0 + h, c0 : c0 + w, channel] = 255 - region
            return out
    raise RuntimeError("could not sample a recolor region within edit bounds")


def _fake_swap(orig: np.ndarray, style: _GroupStyle, rng: np.random.Generator) -> np.ndarray:
    """Replace the moving disk with a contrasting square, color and size
    jittered per fake."""
    size = orig.shape[1]
    flip = rng.integers(64, 128, size=3)
    new_color = _to_uint8((style.obj_color + 128 + flip) % 256)
    out = orig.copy()
    half = style.radius + int(rng.integers(-1, 3))
    for t in range(orig.shape[0]):
        cy, cx = _object_center(style, t)
        r0 = max(0, int(round(cy)) - half)
        c0 = max(0, int(round(cx)) - half)
        r1 = min(size, r0 + 2 * half)
        c1 = min(size, c0 + 2 * half)
        out[t, r0:r1, c0:c1] = new_color
    return out


def _fake_fill(orig: np.ndarray, style: _GroupStyle, rng: np.random.Generator) -> np.ndarray:
    """Erase the moving object by filling with the clean background; the
    erase radius is jittered per fake."""
    size = orig.shape[1]
    bg = _background(style, size)
    pad = float(rng.uniform(1.5, 4.0))
    out = orig.copy()
    for t in range(orig.shape[0]):
        cy, cx = _object_center(style, t)
        disk = _disk_mask(size, cy, cx, style.radius + pad)
        out[t][disk] = _to_uint8(bg)[disk]
    return out


_FAKE_KINDS = ("recolor", "swap", "fill")


def _derive_fake(
    orig: np.ndarray, style: _GroupStyle, kind_idx: int, rng: np.random.Generator
) -> np.ndarray:
    kind = _FAKE_KINDS[kind_idx % len(_FAKE_KINDS)]
    for _ in range(20):
        if kind == "recolor":
            fake = _fake_recolor(orig, rng)
        elif kind == "heavy_recolor":
            fake = _fake_recolor(orig, rng, heavy=True)
        elif kind == "swap":
            fake = _fake_swap(orig, style, rng)
        else:
            fake = _fake_fill(orig, style, rng)
        fracs = [(fake[t] != orig[t]).any(axis=-1).mean() for t in range(orig.shape[0])]
        if all(MIN_EDIT_FRACTION <= f <= MAX_EDIT_FRACTION for f in fracs):
            return fake
        kind = "recolor"  # recolor regions can always be resampled into bounds
    raise RuntimeError("could not derive a fake within edit-fraction bounds")


def _write_video(directory: Path, frames: np.ndarray) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        pnm.write_ppm(directory / f"frame_{t:06d}.ppm", frame)


def _write_masks(directory: Path, orig: np.ndarray, fake: np.ndarray) -> None:
    for t in range(fake.shape[0]):
        mask = (fake[t] != orig[t]).any(axis=-1)
        pnm.write_pgm(directory / f"mask_{t:06d}.pgm", mask.astype(np.uint8) * 255)


def gen_synthetic_dataset(
    num_groups: int,
    fakes_per_group: int,
    frames: int,
    size: int,
    seed: int,
    out: Path | str,
) -> GroupSet:
    """Render a deterministic grouped dataset of moving-shape scenes.

    Each group gets a procedurally distinct original plus ``fakes_per_group``
    locally edited fakes (channel-inverted region, object swap, object
    removal), with per-frame ground-truth masks and a manifest.
    """
    if num_groups < 2:
        raise ValueError("need at least 2 groups")
    if fakes_per_group < 2:
        raise ValueError("need at least 2 fakes per group")
    if frames < 1 or size < 16:
        raise ValueError("frames must be >= 1 and size >= 16")
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create output directory {out_dir}: {exc}") from exc

    manifest_rows = []
    originals = []
    accepted_descs: list[np.ndarray] = []
    for gid in range(num_groups):
        # re-jitter a group whose rendered scene lands too close to an
        # accepted one in descriptor space; keeps originals pairwise distinct
        best = None
        for trial in range(12):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(gid, trial))
            )
            style = _group_style(gid, rng, size, trial)
            orig = _render_original(style, size, frames)
            mean_desc = descriptors_from_frames(orig).mean(axis=0)
            margin = min(
                (float(np.linalg.norm(mean_desc - d)) for d in accepted_descs),
                default=np.inf,
            )
            if best is None or margin > best[0]:
                best = (margin, rng, style, orig, mean_desc)
            if margin >= SEPARATION_MARGIN:
                break
        _, rng, style, orig, mean_desc = best
        accepted_descs.append(mean_desc)
        originals.append(orig)
        group_dir = out_dir / f"group_{gid:03d}"
        _write_video(group_dir / "original", orig)
        manifest_rows.append(f"{gid}\toriginal\tgroup_{gid:03d}/original\tg{gid:03d}_src")
        for j in range(fakes_per_group):
            fake = _derive_fake(orig, style, j, rng)
            fake_dir = group_dir / f"fake_{j:02d}"
            _write_video(fake_dir, fake)
            _write_masks(fake_dir, orig, fake)
            manifest_rows.append(f"{gid}\tfake\tgroup_{gid:03d}/fake_{j:02d}\tg{gid:03d}_f{j:02d}")

    # originals must be separable in descriptor space, frame for frame
    descs = [descriptors_from_frames(o) for o in originals]
    for a in range(num_groups):
        for b in range(a + 1, num_groups):
            dists = np.linalg.norm(descs[a] - descs[b], axis=1)
            if (dists == 0).any():
                raise RuntimeError(
                    f"originals {a} and {b} collide in descriptor space; change the seed"
                )

    manifest = out_dir / "manifest.tsv"
    manifest.write_text("\n".join(manifest_rows) + "\n", encoding="utf-8")
    return load_manifest(manifest)
