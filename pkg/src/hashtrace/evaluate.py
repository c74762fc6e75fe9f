"""Accuracy, robustness, and ablation evaluation of trained artifacts.

Held-out protocol: within each group the last fake video is test material,
the rest train. Every test video contributes a fixed number of seeded clips,
and each clip is traced independently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from hashtrace.codes import binarize
from hashtrace.dataset import (
    FeatureSequence,
    Group,
    GroupSet,
    VideoRef,
    clip_from_descriptors,
    descriptors_from_frames,
    perturb,
)
from hashtrace.encoder import EncoderParams, forward
from hashtrace.index import TraceIndex, trace
from hashtrace.loss import CenterSet
from hashtrace.trainer import TrainConfig, TrainHistory, fit

DEFAULT_CLIPS_PER_VIDEO = 4
DEFAULT_QUERY_SEED = 2024

ABLATION_MODES = ("both", "intra_only", "inter_only")


@dataclass(frozen=True)
class RobustnessRow:
    perturbation: str
    k: int
    accuracy: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[RobustnessRow, ...]
    distance_stats: Mapping[str, float]
    confusion: tuple[tuple[int, int, int], ...]  # (true group, traced group, count)


@dataclass(frozen=True)
class AblationResult:
    params: EncoderParams
    centers: CenterSet
    history: TrainHistory


def map_ordered(fn, items, threads: int = 1):
    """Apply ``fn`` over ``items`` preserving order; results do not depend on
    the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def holdout_split(gs: GroupSet) -> tuple[GroupSet, list[tuple[VideoRef, int]]]:
    """Per group, hold out the last fake for testing; keep the rest."""
    train_groups = []
    test = []
    for g in gs:
        if len(g.fakes) < 3:
            raise ValueError(
                f"group {g.group_id} needs at least 3 fakes to hold one out"
            )
        train_groups.append(
            Group(group_id=g.group_id, original=g.original, fakes=g.fakes[:-1])
        )
        test.append((g.fakes[-1], g.group_id))
    return GroupSet(groups=tuple(train_groups)), test


def clip_seed(base_seed: int, video_idx: int, clip_idx: int) -> int:
    """Stable per-(video, clip) seed for query sampling."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(video_idx, clip_idx))
    return int(ss.generate_state(1)[0])


def make_queries(
    videos: Sequence[tuple[VideoRef, int]],
    clip_len: int,
    stride: int,
    clips_per_video: int = DEFAULT_CLIPS_PER_VIDEO,
    seed: int = DEFAULT_QUERY_SEED,
    perturbation: tuple[str, object] | None = None,
    threads: int = 1,
) -> list[tuple[FeatureSequence, int]]:
    """Seeded query clips for a list of (video, true group) pairs.

    Clip windows depend only on (seed, video position, clip position), so the
    same windows are compared across perturbations.
    """

    def one_video(args):
        vid_idx, (video, gid) = args
        frames = video.load_frames()
        if perturbation is not None:
            kind, magnitude = perturbation
            frames = perturb(frames, kind, magnitude)
        descs = descriptors_from_frames(frames)
        return [
            (clip_from_descriptors(descs, clip_len, stride, clip_seed(seed, vid_idx, c)), gid)
            for c in range(clips_per_video)
        ]

    per_video = map_ordered(one_video, enumerate(videos), threads)
    return [q for chunk in per_video for q in chunk]


def top1_accuracy(
    idx: TraceIndex, params: EncoderParams, queries: Sequence[tuple[FeatureSequence, int]]
) -> float:
    """Fraction of queries whose nearest center belongs to their true group."""
    if not queries:
        raise ValueError("queries must not be empty")
    hits = 0
    for clip, gid in queries:
        if trace(idx, binarize(forward(params, clip))).group_id == gid:
            hits += 1
    return hits / len(queries)


DEFAULT_PERTURBATIONS: tuple[tuple[str, str | None, object], ...] = (
    ("original", None, None),
    ("detail", "detail", 3),
    ("gaussian_blur", "gaussian_blur", 3),
    ("box_blur", "box_blur", 3),
    ("median", "median", 3),
    ("crop", "crop", 0.3),
)


def robustness_suite(
    idx: TraceIndex,
    params: EncoderParams,
    gs: GroupSet,
    perturbations: Sequence[tuple[str, str | None, object]] = DEFAULT_PERTURBATIONS,
    clip_len: int | None = None,
    stride: int = 1,
    clips_per_video: int = DEFAULT_CLIPS_PER_VIDEO,
    seed: int = DEFAULT_QUERY_SEED,
    threads: int = 1,
) -> EvalReport:
    """Top-1 accuracy per perturbation over the held-out fakes.

    All rows evaluate the same checkpoint; only the perturbation varies.
    """
    clip_len = params.cfg.clip_len if clip_len is None else clip_len
    _, test = holdout_split(gs)
    rows = []
    distances = []
    runner_ups = []
    confusion: dict[tuple[int, int], int] = {}
    for name, kind, magnitude in perturbations:
        pert = None if kind is None else (kind, magnitude)
        queries = make_queries(
            test, clip_len, stride, clips_per_video, seed, perturbation=pert, threads=threads
        )
        hits = 0
        for clip, gid in queries:
            result = trace(idx, binarize(forward(params, clip)))
            if result.group_id == gid:
                hits += 1
            if kind is None:
                distances.append(result.distance)
                runner_ups.append(result.runner_up_distance)
                key = (gid, result.group_id)
                confusion[key] = confusion.get(key, 0) + 1
        rows.append(RobustnessRow(perturbation=name, k=idx.k, accuracy=hits / len(queries)))
    stats = {
        "distance_mean": float(np.mean(distances)) if distances else 0.0,
        "runner_up_mean": float(np.mean(runner_ups)) if runner_ups else 0.0,
    }
    conf = tuple(sorted((t, p, c) for (t, p), c in confusion.items()))
    return EvalReport(rows=tuple(rows), distance_stats=stats, confusion=conf)


def ablation_run(
    gs: GroupSet,
    cfg: TrainConfig,
    mode: str,
    activations: Sequence[str] = ("tanh",),
) -> dict[str, AblationResult]:
    """Re-train with one loss term disabled (or both enabled) per activation."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    weights = {"both": (1.0, 1.0), "intra_only": (1.0, 0.0), "inter_only": (0.0, 1.0)}[mode]
    results = {}
    for act in activations:
        run_cfg = replace(cfg, activation=act, intra_weight=weights[0], inter_weight=weights[1])
        params, centers, history = fit(gs, run_cfg)
        results[act] = AblationResult(params=params, centers=centers, history=history)
    return results


def report_emit(
    reports: Mapping[str, tuple[Sequence[str], Sequence[Sequence]]], out_dir
) -> list[Path]:
    """Write one CSV per report: ``name -> (header, rows)``.

    Output bytes are a pure function of the inputs (fixed column order, repr
    formatting for floats).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create report directory {out}: {exc}") from exc
    written = []
    for name in sorted(reports):
        header, rows = reports[name]
        path = out / f"{name}.csv"
        lines = [",".join(header)]
        for row in rows:
            cells = [repr(c) if isinstance(c, float) else str(c) for c in row]
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def robustness_report_rows(report: EvalReport) -> tuple[Sequence[str], list[Sequence]]:
    header = ("perturbation", "k", "accuracy")
    rows = [(r.perturbation, r.k, r.accuracy) for r in report.rows]
    return header, rows


def history_report_rows(history: TrainHistory) -> tuple[Sequence[str], list[Sequence]]:
    header = TrainHistory.CSV_HEADER
    rows = [
        (r.iteration, r.loss, r.inter_mean, r.intra_mean, r.mean_bit) for r in history.records
    ]
    return header, rows
