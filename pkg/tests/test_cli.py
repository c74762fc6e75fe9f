import numpy as np
import pytest

from hashtrace import pnm
from hashtrace.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_missing_required_flag_is_usage_error(capsys):
    code, out, err = run(capsys, "gen-data", "--groups", "2")
    assert code == 1
    assert "usage" in err.lower()


def test_unknown_flag_rejected(capsys):
    code, _, err = run(capsys, "train", "--data", "x", "--out", "y", "--frobnicate", "1")
    assert code == 1


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "explode")
    assert code == 1


def test_runtime_error_exit_code(capsys, tmp_path):
    code, _, err = run(
        capsys, "train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "o")
    )
    assert code == 2
    assert "manifest" in err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    model = root / "model"
    code = main([
        "gen-data", "--groups", "8", "--fakes", "3", "--frames", "10",
        "--size", "48", "--seed", "11", "--out", str(data),
    ])
    assert code == 0
    code = main([
        "train", "--data", str(data), "--bits", "16", "--clip", "4",
        "--embed-dim", "24", "--iters", "120", "--lr", "2e-4", "--seed", "1",
        "--holdout", "--out", str(model),
    ])
    assert code == 0
    return data, model


def test_train_writes_artifacts(pipeline):
    data, model = pipeline
    assert (model / "model.vthp").is_file()
    assert (model / "index.vthx").is_file()
    history = (model / "history.csv").read_text().splitlines()
    assert history[0] == "iter,loss,inter_mean,intra_mean,mean_bit"
    assert len(history) == 121


def test_trace_output_format(pipeline, capsys):
    data, model = pipeline
    video = data / "group_000" / "fake_00"
    code, out, err = run(
        capsys, "trace", "--index", str(model / "index.vthx"),
        "--model", str(model / "model.vthp"), "--video", str(video), "--clips", "2",
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2
    for line in lines:
        gid, label, dist, runner = line.split("\t")
        int(gid), int(dist), int(runner)
        assert label


def test_trace_training_fake_finds_own_group(pipeline, capsys):
    data, model = pipeline
    video = data / "group_002" / "fake_01"
    code, out, _ = run(
        capsys, "trace", "--index", str(model / "index.vthx"),
        "--model", str(model / "model.vthp"), "--video", str(video), "--clips", "4",
    )
    assert code == 0
    votes = [line.split("\t")[0] for line in out.strip().splitlines()]
    assert max(set(votes), key=votes.count) == "2"


def test_eval_outputs_parseable_rows(pipeline, capsys):
    data, model = pipeline
    code, out, err = run(
        capsys, "eval", "--index", str(model / "index.vthx"),
        "--model", str(model / "model.vthp"), "--data", str(data),
        "--perturb", "original,median", "--clips", "2",
    )
    assert code == 0
    rows = dict(line.split("\t") for line in out.strip().splitlines())
    assert set(rows) == {"original", "median"}
    for v in rows.values():
        assert 0.0 <= float(v) <= 1.0


def test_eval_unknown_perturbation(pipeline, capsys):
    data, model = pipeline
    code, _, err = run(
        capsys, "eval", "--index", str(model / "index.vthx"),
        "--model", str(model / "model.vthp"), "--data", str(data),
        "--perturb", "sharpen",
    )
    assert code == 1


def test_localize_writes_masks_and_miou(pipeline, capsys, tmp_path):
    data, model = pipeline
    fake = data / "group_000" / "fake_00"
    original = data / "group_000" / "original"
    out_dir = tmp_path / "masks"
    code, out, err = run(
        capsys, "localize", "--fake", str(fake), "--original", str(original),
        "--out", str(out_dir),
    )
    assert code == 0
    masks = sorted(out_dir.glob("pred_mask_*.pgm"))
    assert len(masks) == 10
    assert pnm.read_pgm(masks[0]).dtype == np.uint8
    assert out.startswith("mIoU=")
    assert "scale=" in err


def test_report_normalizes_csvs(pipeline, capsys, tmp_path):
    data, model = pipeline
    out_dir = tmp_path / "report"
    code, out, _ = run(capsys, "report", "--in", str(model), "--out", str(out_dir))
    assert code == 0
    assert (out_dir / "history.csv").is_file()
    code2, out2, _ = run(capsys, "report", "--in", str(model), "--out", str(tmp_path / "r2"))
    assert (out_dir / "history.csv").read_bytes() == (tmp_path / "r2" / "history.csv").read_bytes()


def test_gen_data_determinism_via_cli(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        code, _, _ = run(capsys, "gen-data", "--groups", "2", "--fakes", "2",
                         "--frames", "6", "--size", "48", "--seed", "3", "--out", str(out))
        assert code == 0
    fa = sorted(p.relative_to(a) for p in a.rglob("*.ppm"))
    fb = sorted(p.relative_to(b) for p in b.rglob("*.ppm"))
    assert fa == fb
    for rel in fa[:5]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
