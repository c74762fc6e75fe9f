"""Small differentiable clip encoder: per-frame embedding, one temporal
self-attention block with residual, mean pooling, and a two-layer head.

Gradients are hand-derived reverse mode and exact; ``grad_check`` compares
them against central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hashtrace.codes import ACTIVATIONS, RelaxedCode

PARAM_FIELDS = ("embed_w", "embed_b", "wq", "wk", "wv", "w1", "b1", "w2", "b2")

_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}
_MID_CODE = {name: i for i, name in enumerate(ACTIVATIONS + ("match",))}

CHECKPOINT_MAGIC = b"VTHP"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised when a parameter checkpoint cannot be decoded."""


@dataclass(frozen=True)
class EncoderConfig:
    feature_dim: int
    embed_dim: int = 64
    bits: int = 64
    clip_len: int = 8
    activation: str = "tanh"
    init_seed: int = 0
    mid_activation: str = "match"  # head nonlinearity; "match" follows activation

    def __post_init__(self):
        for name in ("feature_dim", "embed_dim", "bits", "clip_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.bits % 8 != 0:
            raise ValueError("bits must be a multiple of 8")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.mid_activation not in ACTIVATIONS + ("match",):
            raise ValueError(f"unknown mid_activation {self.mid_activation!r}")
        if not 0 <= self.init_seed < 2**32:
            raise ValueError("init_seed must fit in 32 bits")

    @property
    def mid(self) -> str:
        return self.activation if self.mid_activation == "match" else self.mid_activation


@dataclass
class EncoderParams:
    cfg: EncoderConfig
    embed_w: np.ndarray  # (D, E)
    embed_b: np.ndarray  # (E,)
    wq: np.ndarray  # (E, E)
    wk: np.ndarray  # (E, E)
    wv: np.ndarray  # (E, E)
    w1: np.ndarray  # (E, E)
    b1: np.ndarray  # (E,)
    w2: np.ndarray  # (E, k)
    b2: np.ndarray  # (k,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(getattr(self, name)) for name in PARAM_FIELDS}

    def num_params(self) -> int:
        return sum(getattr(self, name).size for name in PARAM_FIELDS)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(cfg: EncoderConfig) -> EncoderParams:
    """Seeded uniform Glorot weights, zero biases."""
    rng = np.random.default_rng(cfg.init_seed)
    d, e, k = cfg.feature_dim, cfg.embed_dim, cfg.bits
    return EncoderParams(
        cfg=cfg,
        embed_w=_glorot(rng, d, e),
        embed_b=np.zeros(e),
        wq=_glorot(rng, e, e),
        wk=_glorot(rng, e, e),
        wv=_glorot(rng, e, e),
        w1=_glorot(rng, e, e),
        b1=np.zeros(e),
        w2=_glorot(rng, e, k),
        b2=np.zeros(k),
    )


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    return np.maximum(x, 0.0)


def _act_deriv(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - out * out
    if name == "sigmoid":
        return out * (1.0 - out)
    return (pre > 0.0).astype(np.float64)


def _check_input(p: EncoderParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape != (p.cfg.clip_len, p.cfg.feature_dim):
        raise ValueError(
            f"input shape {x.shape} does not match (clip_len, feature_dim)="
            f"({p.cfg.clip_len}, {p.cfg.feature_dim})"
        )
    return x


def _forward_internals(p: EncoderParams, x: np.ndarray) -> dict:
    act = p.cfg.activation
    mid = p.cfg.mid
    z = x @ p.embed_w + p.embed_b  # (T, E)
    q = z @ p.wq
    kk = z @ p.wk
    v = z @ p.wv
    scores = (q @ kk.T) / np.sqrt(p.cfg.embed_dim)  # (T, T)
    shifted = scores - scores.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    attn = ex / ex.sum(axis=1, keepdims=True)
    ctx = attn @ v
    h = z + ctx  # residual
    pooled = h.mean(axis=0)  # (E,)
    u = pooled @ p.w1 + p.b1
    a = _act(mid, u)
    vpre = a @ p.w2 + p.b2
    y = _act(act, vpre)
    return {
        "x": x, "z": z, "q": q, "kk": kk, "v": v, "attn": attn,
        "ctx": ctx, "h": h, "pooled": pooled, "u": u, "a": a,
        "vpre": vpre, "y": y,
    }


def forward(p: EncoderParams, x: np.ndarray) -> RelaxedCode:
    """Encode a (clip_len, feature_dim) descriptor clip to a relaxed code."""
    x = _check_input(p, x)
    return RelaxedCode(_forward_internals(p, x)["y"], p.cfg.activation)


def backward(p: EncoderParams, x: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``upstream . forward(p, x)`` with respect to every parameter."""
    x = _check_input(p, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (p.cfg.bits,):
        raise ValueError(f"upstream shape {upstream.shape} != ({p.cfg.bits},)")
    f = _forward_internals(p, x)
    act = p.cfg.activation
    mid = p.cfg.mid
    T = p.cfg.clip_len

    dvpre = upstream * _act_deriv(act, f["vpre"], f["y"])  # (k,)
    g_w2 = np.outer(f["a"], dvpre)
    g_b2 = dvpre
    da = p.w2 @ dvpre  # (E,)
    du = da * _act_deriv(mid, f["u"], f["a"])
    g_w1 = np.outer(f["pooled"], du)
    g_b1 = du
    dpooled = p.w1 @ du
    dh = np.tile(dpooled / T, (T, 1))  # mean-pool backward
    dz = dh.copy()  # residual branch
    dctx = dh
    dattn = dctx @ f["v"].T  # (T, T)
    dv = f["attn"].T @ dctx
    # softmax rows: dS_ij = A_ij * (dA_ij - sum_k dA_ik A_ik)
    row = (dattn * f["attn"]).sum(axis=1, keepdims=True)
    dscores = f["attn"] * (dattn - row)
    scalef = 1.0 / np.sqrt(p.cfg.embed_dim)
    dq = dscores @ f["kk"] * scalef
    dkk = dscores.T @ f["q"] * scalef
    g_wq = f["z"].T @ dq
    g_wk = f["z"].T @ dkk
    g_wv = f["z"].T @ dv
    dz += dq @ p.wq.T + dkk @ p.wk.T + dv @ p.wv.T
    g_embed_w = x.T @ dz
    g_embed_b = dz.sum(axis=0)
    return {
        "embed_w": g_embed_w, "embed_b": g_embed_b,
        "wq": g_wq, "wk": g_wk, "wv": g_wv,
        "w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2,
    }


def grad_check(
    p: EncoderParams,
    x: np.ndarray,
    eps: float = 1e-4,
    upstream: np.ndarray | None = None,
    sample_limit: int = 10_000,
    sample_seed: int = 0,
) -> float:
    """Max relative error of ``backward`` vs central finite differences.

    Checks every parameter coordinate, or a seeded subsample when the model
    has more than ``sample_limit`` parameters.
    """
    x = _check_input(p, x)
    if upstream is None:
        upstream = np.random.default_rng(sample_seed).standard_normal(p.cfg.bits)

    def objective() -> float:
        return float(upstream @ _forward_internals(p, x)["y"])

    analytic = backward(p, x, upstream)
    coords = [
        (name, idx)
        for name in PARAM_FIELDS
        for idx in range(getattr(p, name).size)
    ]
    if len(coords) > sample_limit:
        rng = np.random.default_rng(sample_seed)
        picks = rng.choice(len(coords), size=sample_limit, replace=False)
        coords = [coords[i] for i in sorted(picks)]
    worst = 0.0
    for name, idx in coords:
        arr = getattr(p, name)
        flat = arr.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + eps
        f_plus = objective()
        flat[idx] = orig - eps
        f_minus = objective()
        flat[idx] = orig
        fd = (f_plus - f_minus) / (2.0 * eps)
        an = analytic[name].reshape(-1)[idx]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-4)
        worst = max(worst, rel)
    return worst


def save_params(p: EncoderParams, path) -> None:
    """Checkpoint layout: magic, u8 version, six u32 config fields, then all
    weights as little-endian f64 in declaration order."""
    cfg = p.cfg
    header = CHECKPOINT_MAGIC + struct.pack(
        "<BIIIIIII",
        CHECKPOINT_VERSION,
        cfg.feature_dim,
        cfg.embed_dim,
        cfg.bits,
        cfg.clip_len,
        _ACT_CODE[cfg.activation],
        cfg.init_seed,
        _MID_CODE[cfg.mid_activation],
    )
    with open(path, "wb") as f:
        f.write(header)
        for name in PARAM_FIELDS:
            f.write(np.ascontiguousarray(getattr(p, name), dtype="<f8").tobytes())


def load_params(path) -> EncoderParams:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic at offset 0: {data[:4]!r}")
    try:
        version, d, e, k, t, act_code, seed, mid_code = struct.unpack_from("<BIIIIIII", data, 4)
    except struct.error:
        raise CheckpointFormatError("truncated header at offset 4") from None
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported version {version} at offset 4")
    if act_code >= len(ACTIVATIONS):
        raise CheckpointFormatError(f"unknown activation code {act_code} at offset 21")
    if mid_code >= len(ACTIVATIONS) + 1:
        raise CheckpointFormatError(f"unknown mid activation code {mid_code} at offset 29")
    cfg = EncoderConfig(
        feature_dim=d, embed_dim=e, bits=k, clip_len=t,
        activation=ACTIVATIONS[act_code], init_seed=seed,
        mid_activation=(ACTIVATIONS + ("match",))[mid_code],
    )
    shapes = {
        "embed_w": (d, e), "embed_b": (e,),
        "wq": (e, e), "wk": (e, e), "wv": (e, e),
        "w1": (e, e), "b1": (e,), "w2": (e, k), "b2": (k,),
    }
    offset = 4 + struct.calcsize("<BIIIIIII")
    arrays = {}
    for name in PARAM_FIELDS:
        shape = shapes[name]
        nbytes = int(np.prod(shape)) * 8
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointFormatError(f"truncated {name} at offset {offset}")
        arrays[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise CheckpointFormatError(f"trailing bytes at offset {offset}")
    return EncoderParams(cfg=cfg, **arrays)
