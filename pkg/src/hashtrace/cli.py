"""Command-line pipeline: dataset generation, training, tracing, evaluation,
localization, and report emission.

Machine-readable output goes to stdout as single tab-separated lines;
human-oriented progress goes to stderr. Exit codes: 0 success, 1 usage
error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from hashtrace import dataset, evaluate, localize, pnm
from hashtrace.codes import binarize
from hashtrace.dataset import gen_synthetic_dataset, load_manifest
from hashtrace.encoder import forward, load_params, save_params
from hashtrace.index import build_index, load_index, save_index, trace
from hashtrace.trainer import TrainConfig, fit


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _default_threads() -> int:
    env = os.environ.get("HASHTRACE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _build_parser() -> _Parser:
    parser = _Parser(prog="hashtrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic grouped dataset")
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--fakes", type=int, required=True)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train encoder and hash centers")
    p.add_argument("--data", required=True)
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--clip", type=int, default=8)
    p.add_argument("--batch-groups", type=int, default=8)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--activation", choices=("tanh", "sigmoid", "relu"), default="tanh")
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", action="store_true",
                   help="exclude each group's last fake from training")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", required=True)

    p = sub.add_parser("trace", help="trace a video to its original's group")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--clips", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="held-out tracing accuracy, optionally perturbed")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--perturb", default="original",
                   help="comma list from: original,detail,gaussian_blur,box_blur,median,crop")
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--crop-frac", type=float, default=0.3)
    p.add_argument("--clips", type=int, default=evaluate.DEFAULT_CLIPS_PER_VIDEO)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", help="also write robustness.csv here")

    p = sub.add_parser("ablate", help="retrain with selected loss terms")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("both", "intra", "inter"), required=True)
    p.add_argument("--activations", default="tanh")
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--clip", type=int, default=8)
    p.add_argument("--batch-groups", type=int, default=8)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("localize", help="diff a fake against an original video")
    p.add_argument("--fake", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.08)
    p.add_argument("--radius", type=int, default=1)

    p = sub.add_parser("report", help="normalize result CSVs into a report directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    return parser


def _load_video_dir(path: str) -> dataset.VideoRef:
    frames = pnm.list_frames(path)
    if not frames:
        raise RuntimeError(f"no frames under {path}")
    return dataset.VideoRef(path=Path(path), frame_count=len(frames), label=Path(path).name)


def _cmd_gen_data(args) -> int:
    gs = gen_synthetic_dataset(
        args.groups, args.fakes, args.frames, args.size, args.seed, args.out
    )
    print(f"groups={gs.m}\tvideos={gs.z}\tmanifest={Path(args.out) / 'manifest.tsv'}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        bits=args.bits,
        clip_len=args.clip,
        stride=getattr(args, "stride", 1),
        activation=getattr(args, "activation", "tanh"),
        embed_dim=args.embed_dim,
        batch_groups=args.batch_groups,
        iterations=args.iters,
        learning_rate=args.lr,
        seed=args.seed,
    )


def _cmd_train(args) -> int:
    gs = load_manifest(Path(args.data) / "manifest.tsv")
    if args.holdout:
        gs, _ = evaluate.holdout_split(gs)
    cfg = _train_config(args)
    params, centers, history = fit(gs, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(params, out / "model.vthp")
    meta = {g.group_id: (g.original.label, str(g.original.path)) for g in gs}
    save_index(build_index(centers, meta), out / "index.vthx")
    history.write_csv(out / "history.csv")
    last = history.records[-1] if history.records else None
    if last is not None:
        print(
            f"iterations={len(history)}\tloss={last.loss:.6f}"
            f"\tinter_mean={last.inter_mean:.3f}\tintra_mean={last.intra_mean:.3f}"
        )
    else:
        print("iterations=0")
    return 0


def _cmd_trace(args) -> int:
    idx = load_index(args.index)
    params = load_params(args.model)
    video = _load_video_dir(args.video)
    descs = dataset.video_descriptors(video)
    for c in range(args.clips):
        clip = dataset.clip_from_descriptors(
            descs, params.cfg.clip_len, 1, evaluate.clip_seed(args.seed, 0, c)
        )
        result = trace(idx, binarize(forward(params, clip)))
        print(
            f"{result.group_id}\t{result.label}\t{result.distance}\t{result.runner_up_distance}"
        )
    return 0


def _parse_perturbations(args) -> list[tuple[str, str | None, object]]:
    rows = []
    for name in args.perturb.split(","):
        name = name.strip()
        if not name:
            continue
        if name == "original":
            rows.append(("original", None, None))
        elif name == "crop":
            rows.append(("crop", "crop", args.crop_frac))
        elif name in dataset.PERTURBATIONS:
            rows.append((name, name, args.kernel))
        else:
            raise UsageError(f"hashtrace eval: unknown perturbation {name!r}")
    if not rows:
        raise UsageError("hashtrace eval: no perturbations selected")
    return rows


def _cmd_eval(args) -> int:
    idx = load_index(args.index)
    params = load_params(args.model)
    gs = load_manifest(Path(args.data) / "manifest.tsv")
    report = evaluate.robustness_suite(
        idx,
        params,
        gs,
        perturbations=_parse_perturbations(args),
        clips_per_video=args.clips,
        threads=args.threads,
    )
    for row in report.rows:
        print(f"{row.perturbation}\t{row.accuracy:.6f}")
    if args.out:
        evaluate.report_emit(
            {"robustness": evaluate.robustness_report_rows(report)}, args.out
        )
    return 0


def _cmd_ablate(args) -> int:
    gs = load_manifest(Path(args.data) / "manifest.tsv")
    if args.holdout:
        gs, _ = evaluate.holdout_split(gs)
    mode = {"both": "both", "intra": "intra_only", "inter": "inter_only"}[args.mode]
    activations = [a.strip() for a in args.activations.split(",") if a.strip()]
    cfg = _train_config(args)
    results = evaluate.ablation_run(gs, cfg, mode, activations)
    reports = {}
    for act, res in results.items():
        reports[f"ablation_{mode}_{act}"] = evaluate.history_report_rows(res.history)
        last = res.history.records[-1]
        print(
            f"{mode}\t{act}\tinter_mean={last.inter_mean:.3f}\tmean_bit={last.mean_bit:.3f}"
        )
    evaluate.report_emit(reports, args.out)
    return 0


def _cmd_localize(args) -> int:
    fake = _load_video_dir(args.fake).load_frames()
    original = _load_video_dir(args.original).load_frames()
    spec = localize.align(fake, original)
    masks = localize.diff_mask(fake, original, spec, tau=args.tau, radius=args.radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, mask in enumerate(masks):
        pnm.write_pgm(out / f"pred_mask_{i:06d}.pgm", mask.astype(np.uint8) * 255)
    print(f"scale={spec.scale}\toffset={spec.offset[0]},{spec.offset[1]}\tscore={spec.score:.4f}",
          file=sys.stderr)
    gt_paths = pnm.list_masks(args.fake)
    if gt_paths:
        gt = np.stack([pnm.read_pgm(p) > 127 for p in gt_paths[: len(masks)]])
        print(f"mIoU={localize.miou(masks[: len(gt)], gt):.6f}")
    return 0


def _cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise RuntimeError(f"input directory {in_dir} does not exist")
    reports = {}
    for csv_path in sorted(in_dir.glob("*.csv")):
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        if not lines:
            continue
        header = lines[0].split(",")
        rows = [line.split(",") for line in lines[1:] if line]
        reports[csv_path.stem] = (header, rows)
    if not reports:
        raise RuntimeError(f"no CSV reports under {in_dir}")
    written = evaluate.report_emit(reports, args.out)
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "trace": _cmd_trace,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "localize": _cmd_localize,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, not a usage problem
        print(f"hashtrace {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
