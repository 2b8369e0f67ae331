"""Small diffusion transformer predicting rectified-flow velocity.

Noise tokens (one per latent cell of the current shot) and context tokens
attend jointly; every block also cross-attends to the caption. The
timestep enters through per-block scale/shift modulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, ops
from .conditioner import ContextTokens, inject
from .config import DEFAULT, Config, ConfigError
from .nn import Params, add_linear, glorot

MAX_RANK = 16  # score-rank embeddings available for context frames


class DenoiserError(ValueError):
    pass


def init_denoiser(rng: np.random.Generator, cfg: Config = DEFAULT, p: Params | None = None) -> Params:
    p = Params() if p is None else p
    d, dv = cfg.model_dim, cfg.latent_dim
    add_linear(p, rng, "den.embed", dv, d)
    p.add("den.pos_time", rng.normal(scale=0.02, size=(cfg.latent_frames, 1, d)))
    p.add("den.pos_space", rng.normal(scale=0.02, size=(1, cfg.n_spatial, d)))
    p.add("den.type", rng.normal(scale=0.02, size=(2, d)))
    p.add("den.rank", rng.normal(scale=0.02, size=(max(MAX_RANK, cfg.k_sel), d)))
    add_linear(p, rng, "den.time1", d, d)
    add_linear(p, rng, "den.time2", d, d)
    add_linear(p, rng, "den.caption", cfg.caption_dim, d)
    for b in range(cfg.blocks):
        pre = f"den.block{b}"
        add_linear(p, rng, f"{pre}.mod", d, 6 * d, zero=True)
        for w in ("q", "k", "v", "o"):
            p.add(f"{pre}.self.{w}", glorot(rng, d, d))
        for w in ("q", "k", "v", "o"):
            p.add(f"{pre}.cross.{w}", glorot(rng, d, d))
        add_linear(p, rng, f"{pre}.ff1", d, cfg.ff_mult * d)
        add_linear(p, rng, f"{pre}.ff2", cfg.ff_mult * d, d)
    add_linear(p, rng, "den.final_mod", d, 2 * d, zero=True)
    add_linear(p, rng, "den.head", d, dv, zero=True)
    return p


def timestep_features(t: np.ndarray, dim: int, max_period: float = 1000.0) -> np.ndarray:
    """Sinusoidal features of t in [0, 1], shape (..., dim)."""
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    ang = (t[..., None] * 1000.0) * freqs
    out = np.concatenate([np.cos(ang), np.sin(ang)], axis=-1)
    if dim % 2:
        out = np.concatenate([out, np.zeros((*out.shape[:-1], 1))], axis=-1)
    return out


def _heads(x: Tensor, h: int) -> Tensor:
    *lead, n, d = x.shape
    y = ops.reshape(x, (*lead, n, h, d // h))
    k = len(lead)
    return ops.transpose(y, tuple(range(k)) + (k + 1, k, k + 2))


def _merge(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    k = len(lead)
    y = ops.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
    return ops.reshape(y, (*lead, n, h * dh))


def _mha(xq: Tensor, xkv: Tensor, p: Params, pre: str, heads: int, mask=None) -> Tensor:
    q = _heads(ops.matmul(xq, p[f"{pre}.q"]), heads)
    k = _heads(ops.matmul(xkv, p[f"{pre}.k"]), heads)
    v = _heads(ops.matmul(xkv, p[f"{pre}.v"]), heads)
    out = ops.attention(q, k, v, mask)
    return ops.matmul(_merge(out), p[f"{pre}.o"])


def _modulate(x: Tensor, shift: Tensor, scl: Tensor) -> Tensor:
    return ops.add(ops.mul(ops.layer_norm(x), ops.add(scl, 1.0)), shift)


def _chunk(m: Tensor, i: int, n: int) -> Tensor:
    """i-th of n equal slices of the last axis, with a length-1 token axis
    inserted so it broadcasts over tokens."""
    *lead, d = m.shape
    r = ops.reshape(m, (*lead, 1, n, d // n))
    return ops.reshape(ops.take(r, [i], axis=len(lead) + 1), (*lead, 1, d // n))


@dataclass
class DenoiserInput:
    x_t: np.ndarray  # (..., N_n, D_v)
    t: np.ndarray  # (...,)
    caption: np.ndarray  # (..., T, D_t)
    caption_mask: np.ndarray  # (..., T)
    context: ContextTokens | None = None
    context_rank: np.ndarray | None = None  # (N_c,) frame rank of each context token


def denoise_velocity(inp: DenoiserInput, p: Params, cfg: Config = DEFAULT, x_t: Tensor | None = None) -> Tensor:
    """Velocity for every noise token, shape (..., N_n, D_v)."""
    t = np.asarray(inp.t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
        raise DenoiserError("t must lie in [0, 1]")
    x = x_t if x_t is not None else Tensor(inp.x_t)
    *lead, nn_, dv = x.shape
    if nn_ != cfg.latent_frames * cfg.n_spatial or dv != cfg.latent_dim:
        raise DenoiserError(f"noise tokens {x.shape[-2:]} do not match the latent layout")
    d, heads = cfg.model_dim, cfg.heads
    if d % heads:
        raise ConfigError("model_dim must be divisible by heads")

    h = ops.linear(x, p["den.embed.w"], p["den.embed.b"])
    pos = ops.reshape(ops.add(p["den.pos_time"], p["den.pos_space"]), (nn_, d))
    h = ops.add(h, pos)

    extra = None
    if inp.context is not None and inp.context.n_tokens:
        rank = np.asarray(inp.context_rank if inp.context_rank is not None else [o[0] for o in inp.context.origin])
        extra = ops.take(p["den.rank"], rank, axis=0)
    X = inject(h, inp.context, p["den.type"], extra)

    tf = Tensor(timestep_features(t.reshape(*lead) if lead else t.reshape(()), d))
    c = ops.linear(ops.tanh(ops.linear(tf, p["den.time1.w"], p["den.time1.b"])), p["den.time2.w"], p["den.time2.b"])
    c = ops.tanh(c)

    cap = ops.linear(Tensor(inp.caption), p["den.caption.w"], p["den.caption.b"])
    cmask = np.asarray(inp.caption_mask, dtype=bool)[..., None, None, :]

    for b in range(cfg.blocks):
        pre = f"den.block{b}"
        mod = ops.linear(c, p[f"{pre}.mod.w"], p[f"{pre}.mod.b"])
        y = _modulate(X, _chunk(mod, 0, 6), _chunk(mod, 1, 6))
        X = ops.add(X, _mha(y, y, p, f"{pre}.self", heads))
        y = _modulate(X, _chunk(mod, 2, 6), _chunk(mod, 3, 6))
        X = ops.add(X, _mha(y, cap, p, f"{pre}.cross", heads, cmask))
        y = _modulate(X, _chunk(mod, 4, 6), _chunk(mod, 5, 6))
        ff = ops.tanh(ops.linear(y, p[f"{pre}.ff1.w"], p[f"{pre}.ff1.b"]))
        X = ops.add(X, ops.linear(ff, p[f"{pre}.ff2.w"], p[f"{pre}.ff2.b"]))

    fm = ops.linear(c, p["den.final_mod.w"], p["den.final_mod.b"])
    X = _modulate(X, _chunk(fm, 0, 2), _chunk(fm, 1, 2))
    if X.shape[-2] != nn_:
        X = ops.take(X, np.arange(nn_), axis=len(lead))
    return ops.linear(X, p["den.head.w"], p["den.head.b"])


def flow_state(x0: np.ndarray, eps: np.ndarray, t: np.ndarray):
    """x_t = (1 - t) x0 + t eps and target v = eps - x0; t broadcasts over
    the trailing token axes."""
    t = np.asarray(t, dtype=np.float64)
    tt = t.reshape(t.shape + (1,) * (np.ndim(x0) - t.ndim))
    return (1.0 - tt) * x0 + tt * eps, eps - x0


def flow_loss(pred: Tensor, target_velocity) -> Tensor:
    return ops.mse(pred, target_velocity)


def to_tokens(z: np.ndarray) -> np.ndarray:
    """(..., T, gh, gw, D_v) latent shot -> (..., T·gh·gw, D_v)."""
    z = np.asarray(z)
    return z.reshape(*z.shape[:-4], -1, z.shape[-1])


def from_tokens(x: np.ndarray, cfg: Config = DEFAULT) -> np.ndarray:
    x = np.asarray(x)
    gh, gw = cfg.grid
    return x.reshape(*x.shape[:-2], cfg.latent_frames, gh, gw, x.shape[-1])
