"""Compress selected memory frames into context tokens.

Frames are ranked by relevance and split into contiguous blocks; the most
relevant block goes through the finest patchifier (most tokens per frame),
later blocks through coarser ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, ops
from .config import DEFAULT, Config, ConfigError
from .nn import Params, add_linear


def partition_by_relevance(n_selected: int, n_patchifiers: int) -> list[np.ndarray]:
    """Positions 0..n-1 (already in descending-score order) split into
    contiguous blocks of ceil(n / L_p); trailing blocks may be empty."""
    if n_patchifiers < 1:
        raise ConfigError("need at least one patchifier")
    size = -(-n_selected // n_patchifiers) if n_selected else 0
    out = []
    for l in range(n_patchifiers):
        lo = min(l * size, n_selected)
        hi = min(lo + size, n_selected)
        out.append(np.arange(lo, hi))
    return out


def order_by_score(indices, scores) -> np.ndarray:
    """Positions of ``indices`` sorted by descending score, ties by index."""
    indices = np.asarray(indices)
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((indices, -scores))


def tokens_per_frame(n_spatial: int, kernel: int) -> int:
    g = int(round(np.sqrt(n_spatial)))
    if g * g != n_spatial or g % kernel:
        raise ConfigError(f"kernel {kernel} does not tile a {g}x{g} latent grid")
    return (g // kernel) ** 2


def context_length(block_sizes, kernels, n_spatial: int) -> int:
    return int(sum(n * tokens_per_frame(n_spatial, k) for n, k in zip(block_sizes, kernels)))


def preset_context_length(cfg: Config = DEFAULT) -> int:
    blocks = [len(b) for b in partition_by_relevance(cfg.k_sel, len(cfg.kernels))]
    return context_length(blocks, cfg.kernels, cfg.n_spatial)


def init_conditioner(rng: np.random.Generator, cfg: Config = DEFAULT, p: Params | None = None, zero: bool = False) -> Params:
    p = Params() if p is None else p
    for l, k in enumerate(cfg.kernels):
        tokens_per_frame(cfg.n_spatial, k)
        add_linear(p, rng, f"cond.patch{l}", k * k * cfg.latent_dim, cfg.model_dim, zero=zero)
    return p


@dataclass
class ContextTokens:
    C: Tensor  # (..., N_c, D)
    origin: list[tuple[int, int]]  # (position in selection order, patchifier index)
    per_patchifier: list[int]

    @property
    def n_tokens(self) -> int:
        return self.C.shape[-2]


def patchify_context(frames, kernels, p: Params) -> ContextTokens:
    """frames: (..., n, N_s, D_v) in descending-score order. Returns tokens
    for block 0 (finest kernel) first, frames in order within a block."""
    frames = frames if isinstance(frames, Tensor) else Tensor(frames)
    *lead, n, ns, dv = frames.shape
    g = int(round(np.sqrt(ns)))
    if g * g != ns:
        raise ConfigError(f"{ns} spatial tokens do not form a square grid")
    parts, origin, counts = [], [], []
    for l, (block, k) in enumerate(zip(partition_by_relevance(n, len(kernels)), kernels)):
        tpf = tokens_per_frame(ns, k)
        counts.append(len(block) * tpf)
        if not len(block):
            continue
        sub = ops.take(frames, block, axis=len(lead))
        grid = ops.reshape(sub, (*lead, len(block), g, g, dv))
        patches = ops.patchify(grid, k)  # (..., b, tpf, k*k*dv)
        tok = ops.linear(patches, p[f"cond.patch{l}.w"], p[f"cond.patch{l}.b"])
        parts.append(ops.reshape(tok, (*lead, len(block) * tpf, tok.shape[-1])))
        origin += [(int(j), l) for j in block for _ in range(tpf)]
    if not parts:
        return ContextTokens(Tensor(np.zeros((*lead, 0, p["cond.patch0.w"].shape[1]))), [], counts)
    C = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-2)
    return ContextTokens(C, origin, counts)


def inject(noise_tokens: Tensor, context: ContextTokens | None, type_emb: Tensor | None = None,
           context_extra: Tensor | None = None) -> Tensor:
    """Joint sequence [noise; context]. ``type_emb`` is (2, D): row 0 added
    to noise tokens, row 1 to context tokens. ``context_extra`` (N_c, D) is
    any further per-token embedding for context positions."""
    n = noise_tokens
    if type_emb is not None:
        n = ops.add(n, ops.take(type_emb, [0], axis=0))
    if context is None or context.n_tokens == 0:
        return n
    c = context.C
    if c.shape[-1] != n.shape[-1]:
        raise ConfigError(f"context width {c.shape[-1]} != noise width {n.shape[-1]}")
    if type_emb is not None:
        c = ops.add(c, ops.take(type_emb, [1], axis=0))
    if context_extra is not None:
        c = ops.add(c, context_extra)
    lead = n.shape[:-2]
    if c.shape[:-2] != lead:
        c = ops.add(c, np.zeros((*lead, 1, 1)))
    return ops.concat([n, c], axis=-2)
