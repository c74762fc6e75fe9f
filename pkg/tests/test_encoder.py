import math

import numpy as np
import pytest

from hashtrace.encoder import (
    CheckpointFormatError,
    EncoderConfig,
    _forward_internals,
    backward,
    forward,
    grad_check,
    init_params,
    load_params,
    save_params,
)


def make(act="tanh", seed=0, D=10, E=12, k=8, T=4, mid="match"):
    cfg = EncoderConfig(
        feature_dim=D, embed_dim=E, bits=k, clip_len=T,
        activation=act, init_seed=seed, mid_activation=mid,
    )
    return init_params(cfg)


def rand_clip(seed, T=4, D=10):
    return np.random.default_rng(seed).uniform(0, 1, (T, D))


def test_init_deterministic():
    a, b = make(seed=7), make(seed=7)
    for name in ("embed_w", "wq", "w2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_init_biases_zero_and_bounds():
    p = make(seed=3)
    assert not p.embed_b.any() and not p.b1.any() and not p.b2.any()
    assert np.abs(p.embed_w).max() <= math.sqrt(6 / (10 + 12))
    assert np.abs(p.w2).max() <= math.sqrt(6 / (12 + 8))


def test_forward_zero_params_tanh():
    p = make()
    for name in ("embed_w", "embed_b", "wq", "wk", "wv", "w1", "b1", "w2", "b2"):
        getattr(p, name)[...] = 0.0
    out = forward(p, rand_clip(0))
    assert np.allclose(out.values, 0.0)


def test_identical_frames_match_single_frame_path():
    p = make(T=5)
    frame = np.random.default_rng(1).uniform(0, 1, (1, 10))
    stacked = np.tile(frame, (5, 1))
    p1 = make(T=1)
    out_multi = forward(p, stacked)
    out_single = forward(p1, frame)
    assert np.allclose(out_multi.values, out_single.values, atol=1e-12)


def test_output_ranges():
    for act, lo, hi in (("tanh", -1, 1), ("sigmoid", 0, 1), ("relu", 0, np.inf)):
        p = make(act=act, seed=11)
        out = forward(p, rand_clip(2))
        assert out.activation == act
        assert (out.values >= lo).all() and (out.values <= hi).all()


def test_forward_shape_mismatch():
    p = make()
    with pytest.raises(ValueError):
        forward(p, np.zeros((3, 10)))
    with pytest.raises(ValueError):
        forward(p, np.zeros((4, 9)))


def test_backward_zero_upstream():
    p = make(seed=5)
    grads = backward(p, rand_clip(3), np.zeros(8))
    assert all(not g.any() for g in grads.values())


def test_backward_matches_hand_derived_tiny_case():
    # single frame, scalar embed: attention collapses to h = z + z*wq... -> z + v
    p = make(D=1, E=1, k=8, T=1, seed=9)
    x = np.array([[0.7]])
    w, wv, w1, b1 = p.embed_w[0, 0], p.wv[0, 0], p.w1[0, 0], p.b1[0]
    z = x[0, 0] * w
    h = z + z * wv  # softmax over one position is 1
    u = h * w1 + b1
    a = math.tanh(u)
    upstream = np.arange(1.0, 9.0)
    grads = backward(p, x, upstream)
    dv = upstream * (1 - np.tanh(a * p.w2[0] + p.b2) ** 2)
    da = float(p.w2[0] @ dv)
    du = da * (1 - a * a)
    dh = du * w1
    dz = dh * (1 + wv)
    assert grads["b2"] == pytest.approx(dv)
    assert grads["w2"][0] == pytest.approx(a * dv)
    assert grads["b1"][0] == pytest.approx(du)
    assert grads["w1"][0, 0] == pytest.approx(h * du)
    assert grads["wv"][0, 0] == pytest.approx(z * dh)
    assert grads["embed_w"][0, 0] == pytest.approx(x[0, 0] * dz)


@pytest.mark.parametrize("act", ["tanh", "sigmoid", "relu"])
def test_grad_check_random_configs(act):
    checked = 0
    seed = 0
    while checked < 5:
        seed += 1
        p = make(act=act, seed=seed)
        x = rand_clip(seed)
        if act == "relu":
            f = _forward_internals(p, x)
            if min(np.abs(f["u"]).min(), np.abs(f["vpre"]).min()) < 5e-3:
                continue  # finite differences straddle a kink
        assert grad_check(p, x, eps=1e-4) <= 1e-4
        checked += 1


def test_grad_check_eps_self_consistency():
    p = make(seed=21)
    x = rand_clip(21)
    a = grad_check(p, x, eps=1e-4)
    b = grad_check(p, x, eps=1e-5)
    assert max(a, b) <= 10 * max(min(a, b), 1e-9)


def test_grad_check_zero_params():
    p = make(seed=2)
    for name in ("embed_w", "embed_b", "wq", "wk", "wv", "w1", "b1", "w2", "b2"):
        getattr(p, name)[...] = 0.0
    assert grad_check(p, rand_clip(4)) <= 1e-8


def test_grad_check_subsamples_large_models():
    p = make(D=40, E=48, k=16, T=4, seed=1)
    assert p.num_params() > 10_000
    err = grad_check(p, np.random.default_rng(0).uniform(0, 1, (4, 40)), sample_limit=500)
    assert err <= 1e-4


def test_checkpoint_round_trip(tmp_path):
    p = make(act="sigmoid", seed=13, mid="tanh")
    save_params(p, tmp_path / "m.vthp")
    q = load_params(tmp_path / "m.vthp")
    assert q.cfg == p.cfg
    for name in ("embed_w", "embed_b", "wq", "wk", "wv", "w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(p, name), getattr(q, name))


def test_checkpoint_bytes_deterministic(tmp_path):
    p = make(seed=13)
    save_params(p, tmp_path / "a.vthp")
    save_params(p, tmp_path / "b.vthp")
    assert (tmp_path / "a.vthp").read_bytes() == (tmp_path / "b.vthp").read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "m.vthp"
    save_params(make(), path)
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="offset 0"):
        load_params(path)


def test_checkpoint_truncation(tmp_path):
    path = tmp_path / "m.vthp"
    save_params(make(), path)
    path.write_bytes(path.read_bytes()[:-9])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_params(path)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(feature_dim=10, bits=12)  # not multiple of 8
    with pytest.raises(ValueError):
        EncoderConfig(feature_dim=0)
    with pytest.raises(ValueError):
        EncoderConfig(feature_dim=10, activation="gelu")
