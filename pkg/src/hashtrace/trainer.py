"""Training loop: triplet-unit batches, Adam updates on the encoder, and
per-iteration majority re-voting of the binary group centers.

Each batch draws distinct groups round-robin from a seeded permutation that
reshuffles every epoch. Every group contributes a unit of (original clip,
two distinct fake clips); the original's binarized code anchors the vote.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from hashtrace.codes import HashCode, binarize, hamming, mean_pairwise_hamming, vote_center
from hashtrace.dataset import FeatureSequence, GroupSet, sample_clip
from hashtrace.encoder import (
    PARAM_FIELDS,
    EncoderConfig,
    EncoderParams,
    backward,
    forward,
    init_params,
)
from hashtrace.loss import CenterSet, LabeledCode, hash_triplet_loss


@dataclass(frozen=True)
class TrainConfig:
    bits: int = 64
    clip_len: int = 8
    stride: int = 1
    activation: str = "tanh"
    mid_activation: str = "match"
    embed_dim: int = 64
    batch_groups: int = 8
    iterations: int = 500
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    intra_weight: float = 1.0
    inter_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_groups < 8:
            raise ValueError("batch_groups must be at least 8")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.bits % 8 != 0 or self.bits < 8:
            raise ValueError("bits must be a positive multiple of 8")


@dataclass(frozen=True)
class TripletUnit:
    group_id: int
    original_clip: FeatureSequence
    fake_clip_1: FeatureSequence
    fake_clip_2: FeatureSequence


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    loss: float
    inter_mean: float
    intra_mean: float
    mean_bit: float


@dataclass
class TrainHistory:
    records: list[IterationRecord] = field(default_factory=list)

    CSV_HEADER = ("iter", "loss", "inter_mean", "intra_mean", "mean_bit")

    def append(self, rec: IterationRecord) -> None:
        self.records.append(rec)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.CSV_HEADER)
            for r in self.records:
                writer.writerow(
                    [r.iteration, repr(r.loss), repr(r.inter_mean), repr(r.intra_mean), repr(r.mean_bit)]
                )

    def __len__(self):
        return len(self.records)


class AdamState:
    """Adam with bias correction and global-norm gradient clipping."""

    def __init__(self, params: EncoderParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = params.zero_grads()
        self.v = params.zero_grads()

    def step(self, params: EncoderParams, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if cfg.grad_clip > 0 and total > cfg.grad_clip:
            scale = cfg.grad_clip / total
            grads = {k: g * scale for k, g in grads.items()}
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name in PARAM_FIELDS:
            g = grads[name]
            self.m[name] = cfg.beta1 * self.m[name] + (1 - cfg.beta1) * g
            self.v[name] = cfg.beta2 * self.v[name] + (1 - cfg.beta2) * (g * g)
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            getattr(params, name)[...] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def _batch_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0, iteration)))


def _epoch_permutation(seed: int, epoch: int, n_groups: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, epoch)))
    return rng.permutation(n_groups)


def _anchor_seed(seed: int, group_id: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(2, group_id))
    return int(ss.generate_state(1)[0])


INIT_TRIALS = 50


def _select_init(
    cfg: TrainConfig, feature_dim: int, anchors: dict[int, FeatureSequence]
) -> tuple[EncoderParams, dict[int, HashCode]]:
    """Deterministic best-of-N weight init: keep the seed whose initial
    anchor codes have the largest minimum pairwise distance.

    Centers start as the binarized codes of the originals' clips; a near
    collision between two groups at initialization is rarely repaired by
    training, so conditioning the start costs a few forward passes and
    buys a well-separated center set.
    """
    best = None
    for trial in range(INIT_TRIALS):
        ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(3, trial))
        enc_cfg = EncoderConfig(
            feature_dim=feature_dim,
            embed_dim=cfg.embed_dim,
            bits=cfg.bits,
            clip_len=cfg.clip_len,
            activation=cfg.activation,
            init_seed=int(ss.generate_state(1)[0]),
            mid_activation=cfg.mid_activation,
        )
        params = init_params(enc_cfg)
        centers = {gid: binarize(forward(params, clip)) for gid, clip in sorted(anchors.items())}
        codes = list(centers.values())
        if len(codes) >= 2:
            dists = [hamming(a, b) for i, a in enumerate(codes) for b in codes[i + 1 :]]
            score = (min(dists), sum(dists) / len(dists))
        else:
            score = (cfg.bits, float(cfg.bits))
        if best is None or score > best[0]:
            best = (score, params, centers)
    return best[1], best[2]


def _batch_group_ids(gs: GroupSet, batch_groups: int, seed: int, iteration: int) -> list[int]:
    """Distinct groups for one batch: consecutive slots of per-epoch
    permutations, so every group appears exactly once per epoch."""
    n = len(gs)
    b = min(batch_groups, n)
    start = iteration * b
    ids = []
    for slot in range(start, start + b):
        epoch, offset = divmod(slot, n)
        perm = _epoch_permutation(seed, epoch, n)
        ids.append(int(perm[offset]))
    return ids


def build_batch(
    gs: GroupSet,
    cfg: TrainConfig,
    seed: int,
    iteration: int,
    cache: dict | None = None,
) -> list[TripletUnit]:
    """One batch of triplet units, deterministic given (seed, iteration)."""
    for g in gs:
        if len(g.fakes) < 2:
            raise ValueError(f"group {g.group_id} has fewer than 2 fakes")
    rng = _batch_rng(seed, iteration)
    units = []
    for gid in _batch_group_ids(gs, cfg.batch_groups, seed, iteration):
        group = gs.groups[gid]
        i, j = rng.choice(len(group.fakes), size=2, replace=False)
        clips = [
            sample_clip(video, cfg.clip_len, cfg.stride, int(rng.integers(2**31)), cache)
            for video in (group.original, group.fakes[int(i)], group.fakes[int(j)])
        ]
        units.append(
            TripletUnit(
                group_id=gid,
                original_clip=clips[0],
                fake_clip_1=clips[1],
                fake_clip_2=clips[2],
            )
        )
    return units


def revote_centers(
    codes_by_group: dict[int, tuple[HashCode, list[HashCode]]],
    previous: dict[int, HashCode],
) -> dict[int, HashCode]:
    """Majority-revote each group seen this iteration; keep the rest.

    ``codes_by_group`` maps group id to (anchor code, all codes incl. anchor).
    """
    centers = dict(previous)
    for gid in sorted(codes_by_group):
        anchor, codes = codes_by_group[gid]
        if anchor is None:
            raise ValueError(f"group {gid}: no anchor code for revote")
        centers[gid] = vote_center(codes, anchor)
    return centers


def train_metrics(centers: CenterSet, codes_by_group: dict[int, list[HashCode]]) -> dict:
    """Inter-center mean pairwise Hamming, mean intra-group Hamming of codes
    to their own center, and the mean bit value over all binarized codes."""
    center_list = [centers.centers[g] for g in centers.group_ids()]
    inter = mean_pairwise_hamming(center_list) if len(center_list) >= 2 else 0.0
    dists = []
    bits = []
    for gid, codes in codes_by_group.items():
        c = centers.centers[gid]
        for code in codes:
            dists.append(hamming(code, c))
            bits.append(code.bits.mean())
    return {
        "inter_mean": float(inter),
        "intra_mean": float(np.mean(dists)) if dists else 0.0,
        "mean_bit": float(np.mean(bits)) if bits else 0.0,
    }


def _unit_chain(values01_grad: np.ndarray, relaxed) -> np.ndarray:
    """Chain a gradient in [0,1]-code space back to raw activation outputs."""
    return values01_grad * relaxed.unit_derivative()


def fit(gs: GroupSet, cfg: TrainConfig) -> tuple[EncoderParams, CenterSet, TrainHistory]:
    """Train the encoder and hash centers on a grouped dataset.

    Every group's center starts as the binarized code of a clip from its
    original; each iteration encodes a batch, applies one Adam step, then
    re-votes the centers of the groups present in the batch.
    """
    cache: dict = {}
    anchors = {
        g.group_id: sample_clip(
            g.original, cfg.clip_len, cfg.stride, _anchor_seed(cfg.seed, g.group_id), cache
        )
        for g in gs
    }
    feature_dim = next(iter(anchors.values())).shape[1]
    params, centers = _select_init(cfg, feature_dim, anchors)
    adam = AdamState(params, cfg)
    history = TrainHistory()

    for it in range(cfg.iterations):
        units = build_batch(gs, cfg, cfg.seed, it, cache)
        clips = []
        labels = []
        for unit in units:
            for clip in (unit.original_clip, unit.fake_clip_1, unit.fake_clip_2):
                clips.append(clip)
                labels.append(unit.group_id)
        relaxed = [forward(params, clip) for clip in clips]
        batch = [LabeledCode.from_relaxed(rc, gid) for rc, gid in zip(relaxed, labels)]
        center_set = CenterSet(centers=dict(centers), k=cfg.bits)
        loss_value, grads01 = hash_triplet_loss(
            batch, center_set, cfg.intra_weight, cfg.inter_weight
        )
        if not np.isfinite(loss_value):
            raise RuntimeError(f"non-finite loss {loss_value} at iteration {it}")

        total = params.zero_grads()
        for idx, (clip, rc) in enumerate(zip(clips, relaxed)):
            g = backward(params, clip, _unit_chain(grads01[idx], rc))
            for name in PARAM_FIELDS:
                total[name] += g[name]
        adam.step(params, total)

        binary = [binarize(rc) for rc in relaxed]
        votes: dict[int, tuple[HashCode, list[HashCode]]] = {}
        codes_by_group: dict[int, list[HashCode]] = {}
        for unit_idx, unit in enumerate(units):
            anchor = binary[unit_idx * 3]
            group_codes = binary[unit_idx * 3 : unit_idx * 3 + 3]
            votes[unit.group_id] = (anchor, group_codes)
            codes_by_group[unit.group_id] = group_codes
        centers = revote_centers(votes, centers)

        metrics = train_metrics(CenterSet(centers=dict(centers), k=cfg.bits), codes_by_group)
        history.append(
            IterationRecord(
                iteration=it,
                loss=float(loss_value),
                inter_mean=metrics["inter_mean"],
                intra_mean=metrics["intra_mean"],
                mean_bit=metrics["mean_bit"],
            )
        )

    return params, CenterSet(centers=dict(centers), k=cfg.bits), history
