"""Binary PPM (P6) and PGM (P5) readers/writers.

Frames are stored as P6 files and tamper masks as P5 files (255 = tampered).
Hand-rolled so output bytes are reproducible bit-for-bit.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER_RE = re.compile(rb"^(P[56])\s(?:#[^\n]*\n|\s)*(\d+)\s(?:#[^\n]*\n|\s)*(\d+)\s(?:#[^\n]*\n|\s)*(\d+)\s")


def _parse_header(data: bytes, path) -> tuple[str, int, int, int]:
    m = _HEADER_RE.match(data)
    if not m:
        raise ValueError(f"{path}: not a binary PPM/PGM file")
    magic = m.group(1).decode()
    width, height, maxval = (int(m.group(i)) for i in (2, 3, 4))
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return magic, width, height, m.end()


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    magic, width, height, offset = _parse_header(data, path)
    if magic != "P6":
        raise ValueError(f"{path}: expected P6, got {magic}")
    need = width * height * 3
    body = data[offset : offset + need]
    if len(body) != need:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) array")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file into an (H, W) uint8 array."""
    data = Path(path).read_bytes()
    magic, width, height, offset = _parse_header(data, path)
    if magic != "P5":
        raise ValueError(f"{path}: expected P5, got {magic}")
    need = width * height
    body = data[offset : offset + need]
    if len(body) != need:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("expected an (H, W) array")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def list_frames(directory) -> list[Path]:
    """Frame files of a video directory in lexicographic order."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frame directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.name.endswith(".ppm"))


def list_masks(directory) -> list[Path]:
    d = Path(directory)
    return sorted(p for p in d.iterdir() if p.name.startswith("mask_") and p.name.endswith(".pgm"))
