"""Persistent hash-center index with minimum-Hamming-distance Top-1 lookup.

The store is a flat file: magic ``VTHX``, u8 version, u16 k, u32 n, then per
entry a u32 group id, k/8 packed center bytes (bit 0 = MSB of byte 0), and
two length-prefixed UTF-8 strings (label, original reference). All integers
little-endian. The group-id + center portion wastes nothing: exactly
n * (32 + k) / 8 bytes.

Lookup is a linear popcount scan; ties go to the smallest group id.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from hashtrace.codes import HashCode, binarize, hamming_to_many, packed_matrix
from hashtrace.encoder import EncoderParams, forward
from hashtrace.loss import CenterSet

INDEX_MAGIC = b"VTHX"
INDEX_VERSION = 1


class IndexFormatError(ValueError):
    """Raised when an index file cannot be decoded."""


@dataclass(frozen=True)
class IndexEntry:
    group_id: int
    center: HashCode
    label: str
    original_ref: str


@dataclass(frozen=True)
class TraceResult:
    group_id: int
    label: str
    original_ref: str
    distance: int
    runner_up_distance: int


class TraceIndex:
    """Immutable list of (group id, center, metadata), sorted by group id."""

    def __init__(self, entries: Sequence[IndexEntry]):
        if not entries:
            raise ValueError("index must contain at least one entry")
        entries = tuple(sorted(entries, key=lambda e: e.group_id))
        ids = [e.group_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate group ids in index")
        if any(e.group_id < 0 or e.group_id >= 2**32 for e in entries):
            raise ValueError("group ids must fit in u32")
        k = entries[0].center.k
        if any(e.center.k != k for e in entries):
            raise ValueError("mixed center lengths")
        if k % 8 != 0:
            raise ValueError("k must be a multiple of 8 for the index format")
        self.entries = entries
        self.k = k
        self._ids = np.array(ids, dtype=np.int64)
        self._matrix = packed_matrix([e.center for e in entries])

    def __len__(self):
        return len(self.entries)

    @property
    def payload_bytes(self) -> int:
        """Bytes taken by ids + centers alone: n * (32 + k) / 8."""
        return len(self.entries) * (32 + self.k) // 8

    def distances(self, code: HashCode) -> np.ndarray:
        if code.k != self.k:
            raise ValueError(f"query has k={code.k}, index has k={self.k}")
        return hamming_to_many(self._matrix, code)


def build_index(centers: CenterSet, meta) -> TraceIndex:
    """Assemble an index from trained centers and per-group metadata.

    ``meta`` is a mapping group_id -> (label, original_ref) or an iterable of
    (group_id, label, original_ref) rows.
    """
    if isinstance(meta, Mapping):
        rows = [(gid, lab, ref) for gid, (lab, ref) in meta.items()]
    else:
        rows = [tuple(r) for r in meta]
    seen = set()
    table = {}
    for gid, label, ref in rows:
        if gid in seen:
            raise ValueError(f"duplicate metadata for group {gid}")
        seen.add(gid)
        table[gid] = (str(label), str(ref))
    entries = []
    for gid in centers.group_ids():
        if gid not in table:
            raise ValueError(f"metadata missing for group {gid}")
        label, ref = table[gid]
        entries.append(
            IndexEntry(group_id=gid, center=centers.centers[gid], label=label, original_ref=ref)
        )
    return TraceIndex(entries)


def trace(idx: TraceIndex, code: HashCode) -> TraceResult:
    """Nearest center by Hamming distance; ties break to the smallest group
    id. The runner-up distance doubles as a confidence margin (for a
    single-entry index it is k, the maximum possible distance)."""
    dists = idx.distances(code)
    best = int(np.argmin(dists))  # entries sorted by id, so first min wins ties
    entry = idx.entries[best]
    if len(dists) > 1:
        runner_up = int(np.partition(dists, 1)[1])
    else:
        runner_up = idx.k
    return TraceResult(
        group_id=entry.group_id,
        label=entry.label,
        original_ref=entry.original_ref,
        distance=int(dists[best]),
        runner_up_distance=runner_up,
    )


def save_index(idx: TraceIndex, path) -> None:
    with open(path, "wb") as f:
        f.write(INDEX_MAGIC)
        f.write(struct.pack("<BHI", INDEX_VERSION, idx.k, len(idx.entries)))
        for e in idx.entries:
            f.write(struct.pack("<I", e.group_id))
            f.write(e.center.packed.tobytes())
            label = e.label.encode("utf-8")
            ref = e.original_ref.encode("utf-8")
            if len(label) >= 2**16 or len(ref) >= 2**16:
                raise ValueError("label/ref too long for u16 length prefix")
            f.write(struct.pack("<H", len(label)))
            f.write(label)
            f.write(struct.pack("<H", len(ref)))
            f.write(ref)


def load_index(path) -> TraceIndex:
    data = Path(path).read_bytes()
    if data[:4] != INDEX_MAGIC:
        raise IndexFormatError(f"bad magic at offset 0: {data[:4]!r}")
    try:
        version, k, n = struct.unpack_from("<BHI", data, 4)
    except struct.error:
        raise IndexFormatError("truncated header at offset 4") from None
    if version != INDEX_VERSION:
        raise IndexFormatError(f"unsupported version {version} at offset 4")
    if k == 0 or k % 8 != 0:
        raise IndexFormatError(f"invalid k={k} at offset 5")
    offset = 4 + struct.calcsize("<BHI")
    entries = []
    for i in range(n):
        try:
            (gid,) = struct.unpack_from("<I", data, offset)
            offset += 4
            center_bytes = data[offset : offset + k // 8]
            if len(center_bytes) != k // 8:
                raise struct.error
            offset += k // 8
            (label_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            label = data[offset : offset + label_len]
            if len(label) != label_len:
                raise struct.error
            offset += label_len
            (ref_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            ref = data[offset : offset + ref_len]
            if len(ref) != ref_len:
                raise struct.error
            offset += ref_len
        except struct.error:
            raise IndexFormatError(f"truncated entry {i} at offset {offset}") from None
        entries.append(
            IndexEntry(
                group_id=gid,
                center=HashCode.from_packed(center_bytes, k),
                label=label.decode("utf-8"),
                original_ref=ref.decode("utf-8"),
            )
        )
    if offset != len(data):
        raise IndexFormatError(f"trailing bytes at offset {offset}")
    return TraceIndex(entries)


@dataclass(frozen=True)
class BenchmarkReport:
    encode_time_mean: float
    lookup_time_mean: float
    n: int
    k: int


def benchmark_trace(
    idx: TraceIndex,
    params: EncoderParams,
    queries: Sequence[np.ndarray],
    ratio_limit: float | None = 0.05,
) -> BenchmarkReport:
    """Mean per-query encode time vs mean lookup time over >= 100 queries.

    ``queries`` are frame clips, each an (clip_len, H, W, 3) uint8 stack;
    encoding covers the full per-detection path (frame descriptors, the
    encoder forward pass, binarization), and lookup is the Hamming scan.
    Raises if lookup exceeds ``ratio_limit`` times encoding, the regime
    where hashing retrieval would stop being effectively free.
    """
    from hashtrace.dataset import descriptors_from_frames

    if len(queries) < 100:
        raise ValueError("need at least 100 queries for a stable benchmark")
    codes = []
    t0 = time.perf_counter()
    for q in queries:
        codes.append(binarize(forward(params, descriptors_from_frames(q))))
    encode_mean = (time.perf_counter() - t0) / len(queries)
    t0 = time.perf_counter()
    for code in codes:
        trace(idx, code)
    lookup_mean = (time.perf_counter() - t0) / len(queries)
    report = BenchmarkReport(
        encode_time_mean=encode_mean,
        lookup_time_mean=lookup_mean,
        n=len(idx),
        k=idx.k,
    )
    if ratio_limit is not None and lookup_mean >= ratio_limit * encode_mean:
        raise RuntimeError(
            f"lookup {lookup_mean:.3e}s not under {ratio_limit} x encode {encode_mean:.3e}s"
        )
    return report
