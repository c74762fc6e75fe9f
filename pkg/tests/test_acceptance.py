"""End-to-end acceptance suite.

Each test prints one `[PASS]`/`[FAIL]` line for its criterion (visible with
``pytest -s`` or on failure). The heavy training artifacts are built once per
session and shared.

Run with: ``pytest tests/test_acceptance.py -v -s``
"""

import itertools
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from hashtrace.codes import HashCode, binarize, hamming
from hashtrace.dataset import SpliceSpec, gen_synthetic_dataset, perturb, synth_splice
from hashtrace.encoder import (
    EncoderConfig,
    _forward_internals,
    grad_check,
    init_params,
)
from hashtrace.evaluate import (
    holdout_split,
    make_queries,
    robustness_suite,
    top1_accuracy,
)
from hashtrace.index import IndexEntry, TraceIndex, benchmark_trace, build_index, load_index, save_index, trace
from hashtrace.localize import align, diff_mask, miou
from hashtrace.trainer import TrainConfig, fit

GROUPS = 32
FAKES = 6
FRAMES = 16
SIZE = 64
BITS = 64
CLIP = 8
DATASET_SEED = 42
TRAIN_SEED = 5

MAIN_CFG = dict(
    bits=BITS, clip_len=CLIP, stride=1, activation="tanh", embed_dim=64,
    batch_groups=32, iterations=250, learning_rate=5e-5, seed=TRAIN_SEED,
)


def report(num: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="session")
def acceptance_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_data")
    gs = gen_synthetic_dataset(GROUPS, FAKES, FRAMES, SIZE, seed=DATASET_SEED, out=out)
    return gs, out


@pytest.fixture(scope="session")
def trained(acceptance_dataset):
    gs, _ = acceptance_dataset
    train_gs, test = holdout_split(gs)
    t0 = time.time()
    params, centers, history = fit(train_gs, TrainConfig(**MAIN_CFG))
    train_time = time.time() - t0
    meta = {g.group_id: (g.original.label, str(g.original.path)) for g in train_gs}
    idx = build_index(centers, meta)
    return dict(
        gs=gs, train_gs=train_gs, test=test, params=params, centers=centers,
        history=history, index=idx, train_time=train_time,
    )


def test_criterion_1_gradient_correctness():
    t0 = time.time()
    worst = 0.0
    for act in ("tanh", "sigmoid", "relu"):
        done, seed = 0, 0
        while done < 20:
            seed += 1
            cfg = EncoderConfig(
                feature_dim=10, embed_dim=12, bits=8, clip_len=4,
                activation=act, init_seed=seed,
            )
            p = init_params(cfg)
            x = np.random.default_rng(seed).uniform(0, 1, (4, 10))
            if act == "relu":
                f = _forward_internals(p, x)
                # central differences are invalid across the relu kink
                if min(np.abs(f["u"]).min(), np.abs(f["vpre"]).min()) < 5e-3:
                    continue
            worst = max(worst, grad_check(p, x, eps=1e-4))
            done += 1
    elapsed = time.time() - t0
    report(1, worst <= 1e-4 and elapsed < 60,
           f"max rel err {worst:.2e} (<= 1e-4) over 60 runs in {elapsed:.1f}s (< 60s)")


def test_criterion_2_end_to_end_tracing(trained):
    queries = make_queries(trained["test"], CLIP, 1)
    acc = top1_accuracy(trained["index"], trained["params"], queries)
    ok = acc >= 0.95 and MAIN_CFG["iterations"] <= 2000 and trained["train_time"] < 600
    report(2, ok,
           f"held-out top-1 {acc:.4f} (>= 0.95) after {MAIN_CFG['iterations']} iterations "
           f"(<= 2000), trained in {trained['train_time']:.0f}s")


def test_criterion_3_center_geometry(trained):
    centers = trained["centers"]
    cl = [centers.centers[g] for g in centers.group_ids()]
    inter = np.mean([hamming(a, b) for a, b in itertools.combinations(cl, 2)])
    intra = trained["history"].records[-1].intra_mean
    ok = 0.4 * BITS <= inter <= 0.6 * BITS and intra <= 0.1 * BITS
    report(3, ok,
           f"inter-center mean {inter:.1f} in [{0.4*BITS:.1f}, {0.6*BITS:.1f}], "
           f"intra mean {intra:.2f} <= {0.1*BITS:.1f}")


def test_criterion_4_intra_only_bit_collapse(acceptance_dataset):
    gs, _ = acceptance_dataset
    train_gs, _ = holdout_split(gs)
    cfg = TrainConfig(**{**MAIN_CFG, "activation": "relu", "mid_activation": "tanh",
                         "learning_rate": 1e-3, "iterations": 300, "seed": 47,
                         "intra_weight": 1.0, "inter_weight": 0.0})
    _, _, history = fit(train_gs, cfg)
    mean_bit = history.records[-1].mean_bit
    ok = mean_bit < 0.1 or mean_bit > 0.9
    report(4, ok, f"intra-only mean bit {mean_bit:.4f} outside [0.1, 0.9]")


def test_criterion_4_inter_only_below_both(trained):
    # Known-red at this scale: with cleanly separable synthetic groups, the
    # encoder keeps each group's codes together on its own (smoothness), so
    # dropping the pull-to-center term loses nothing; the push-apart term
    # alone yields the same or better held-out accuracy. The expected
    # accuracy deficit for the inter-only ablation only materializes when
    # group cohesion actually has to be learned.
    train_gs = trained["train_gs"]
    queries = make_queries(trained["test"], CLIP, 1)
    acc_both = top1_accuracy(trained["index"], trained["params"], queries)
    cfg = TrainConfig(**{**MAIN_CFG, "intra_weight": 0.0, "inter_weight": 1.0})
    params, centers, _ = fit(train_gs, cfg)
    meta = {g.group_id: (g.original.label, str(g.original.path)) for g in train_gs}
    idx = build_index(centers, meta)
    acc_inter = top1_accuracy(idx, params, queries)
    report(4, acc_inter < acc_both,
           f"inter-only accuracy {acc_inter:.4f} strictly below both-losses {acc_both:.4f}")


@pytest.mark.parametrize(
    "act,mid,lr,iters,seed",
    [
        ("tanh", "match", 5e-5, 250, TRAIN_SEED),
        ("sigmoid", "tanh", 5e-5, 250, 29),
        # Known-red: relu codes freeze once they cross the [0,1] clamp (dead
        # units and the ceiling both stop gradients), so every run ratchets
        # toward all-ones and the center spread decays from ~0.3k instead of
        # settling near k/2. This is the best operating point found.
        ("relu", "tanh", 2e-5, 100, 29),
    ],
)
def test_criterion_4_activation_band(acceptance_dataset, act, mid, lr, iters, seed):
    gs, _ = acceptance_dataset
    train_gs, _ = holdout_split(gs)
    cfg = TrainConfig(**{**MAIN_CFG, "activation": act, "mid_activation": mid,
                         "learning_rate": lr, "iterations": iters, "seed": seed})
    _, centers, _ = fit(train_gs, cfg)
    cl = [centers.centers[g] for g in centers.group_ids()]
    inter = np.mean([hamming(a, b) for a, b in itertools.combinations(cl, 2)])
    ok = 0.4 * BITS <= inter <= 0.6 * BITS
    report(4, ok, f"{act} inter-center mean {inter:.1f} in [{0.4*BITS:.1f}, {0.6*BITS:.1f}]")


def test_criterion_5_robustness_ordering(trained):
    rep = robustness_suite(trained["index"], trained["params"], trained["gs"])
    acc = {r.perturbation: r.accuracy for r in rep.rows}
    base = acc["original"]
    filters = ("gaussian_blur", "box_blur", "median", "detail")
    drops = {k: 100 * (base - acc[k]) for k in filters}
    crop_drop = 100 * (base - acc["crop"])
    ok = all(d <= 2.0 for d in drops.values()) and all(crop_drop > d for d in drops.values())
    report(5, ok,
           "filter drops " + ", ".join(f"{k}={v:.1f}pt" for k, v in drops.items())
           + f" (<= 2pt); crop drop {crop_drop:.1f}pt strictly larger")


def test_criterion_6_retrieval_oracle():
    rng = np.random.default_rng(123)
    total = 0
    mismatches = 0
    while total < 10_000:
        n = int(rng.integers(1, 64))
        k = int(rng.choice([8, 16, 64, 128]))
        ids = sorted(rng.choice(10 * n, size=n, replace=False).tolist())
        entries = [
            IndexEntry(int(g), HashCode(rng.integers(0, 2, k)), f"l{g}", f"r{g}") for g in ids
        ]
        idx = TraceIndex(entries)
        ints = {e.group_id: int.from_bytes(e.center.packed.tobytes(), "big") for e in entries}
        for _ in range(250):
            q = HashCode(rng.integers(0, 2, k))
            qi = int.from_bytes(q.packed.tobytes(), "big")
            got = trace(idx, q)
            best = min(ints, key=lambda g: ((ints[g] ^ qi).bit_count(), g))
            want_d = (ints[best] ^ qi).bit_count()
            if (got.group_id, got.distance) != (best, want_d):
                mismatches += 1
            total += 1
    report(6, mismatches == 0, f"{total} random queries, {mismatches} oracle mismatches")


def test_criterion_7_index_format(tmp_path):
    rng = np.random.default_rng(7)
    checked = []
    for n, k in ((1, 8), (10, 512), (33, 64), (100, 128)):
        ids = sorted(rng.choice(10 * n, size=n, replace=False).tolist())
        entries = [
            IndexEntry(int(g), HashCode(rng.integers(0, 2, k)), f"l{g}", f"r{g}") for g in ids
        ]
        idx = TraceIndex(entries)
        p1 = tmp_path / f"a_{n}_{k}.vthx"
        p2 = tmp_path / f"b_{n}_{k}.vthx"
        save_index(idx, p1)
        loaded = load_index(p1)
        save_index(loaded, p2)
        bit_identical = p1.read_bytes() == p2.read_bytes()
        payload_ok = idx.payload_bytes == n * (32 + k) // 8
        meta = sum(4 + len(e.label.encode()) + len(e.original_ref.encode()) for e in idx.entries)
        size_ok = p1.stat().st_size == 11 + idx.payload_bytes + meta
        checked.append(bit_identical and payload_ok and size_ok)
    report(7, all(checked), f"round-trip bytes and n*(32+k)/8 payload hold for {len(checked)} (n,k) pairs")


def test_criterion_8_latency_model():
    rng = np.random.default_rng(8)
    entries = [
        IndexEntry(i, HashCode(rng.integers(0, 2, 1024)), f"g{i}", f"r{i}") for i in range(1024)
    ]
    idx = TraceIndex(entries)
    cfg = EncoderConfig(feature_dim=112, embed_dim=64, bits=1024, clip_len=8,
                        activation="tanh", init_seed=0)
    params = init_params(cfg)
    queries = [rng.integers(0, 256, (8, SIZE, SIZE, 3), dtype=np.uint8) for _ in range(110)]
    rep = benchmark_trace(idx, params, queries, ratio_limit=None)
    ratio = rep.lookup_time_mean / rep.encode_time_mean
    report(8, ratio < 0.05,
           f"n=1024 k=1024: lookup {rep.lookup_time_mean*1e6:.0f}us vs encode "
           f"{rep.encode_time_mean*1e3:.2f}ms, ratio {ratio:.4f} < 0.05")


def test_criterion_9_localization(acceptance_dataset):
    gs, _ = acceptance_dataset
    host = gs.groups[0].original.load_frames()
    obj = np.zeros((16, 16, 3), np.uint8)
    obj[:, :] = (250, 40, 200)
    yy, xx = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    mask = (yy - 7.5) ** 2 + (xx - 7.5) ** 2 <= 49
    spec = SpliceSpec(scale=1.0, pos=(20, 24), object_frames=tuple((obj, mask) for _ in range(10)))
    fakes, gt = synth_splice(host, spec)

    spec_clean = align(fakes, host[:10])
    clean = miou(diff_mask(fakes, host[:10], spec_clean), gt)

    cropped = perturb(fakes, "crop", 0.1)
    gt_rgb = np.repeat((gt * 255).astype(np.uint8)[..., None], 3, axis=3)
    gt_crop = perturb(gt_rgb, "crop", 0.1)[:, :, :, 0] > 127
    spec_crop = align(cropped, host[:10])
    crop_score = miou(diff_mask(cropped, host[:10], spec_crop), gt_crop)

    report(9, clean >= 0.80 and crop_score >= 0.70,
           f"splice mIoU clean {clean:.3f} (>= 0.80), crop(0.1) {crop_score:.3f} (>= 0.70)")


def test_criterion_10_determinism(tmp_path):
    data = tmp_path / "data"
    cmd = [sys.executable, "-m", "hashtrace.cli"]
    gen = cmd + ["gen-data", "--groups", "8", "--fakes", "3", "--frames", "10",
                 "--size", "48", "--seed", "11", "--out", str(data)]
    subprocess.run(gen, check=True, capture_output=True)
    outputs = []
    for run_dir in ("run1", "run2"):
        out = tmp_path / run_dir
        train = cmd + ["train", "--data", str(data), "--bits", "32", "--clip", "4",
                       "--embed-dim", "24", "--iters", "60", "--lr", "2e-4",
                       "--seed", "7", "--out", str(out)]
        subprocess.run(train, check=True, capture_output=True)
        outputs.append({
            name: (out / name).read_bytes()
            for name in ("history.csv", "model.vthp", "index.vthx")
        })
    same = {name: outputs[0][name] == outputs[1][name] for name in outputs[0]}
    report(10, all(same.values()),
           "byte-identical across two runs: " + ", ".join(f"{k}={v}" for k, v in same.items()))
