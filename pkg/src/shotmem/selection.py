"""Relevance-driven frame selection over the global memory of past shots.

Learnable queries read the caption, then the memory; each memory frame is
scored against the refined queries and the top frames are retrieved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, ops
from .codecs import reference_vectors
from .config import DEFAULT, Config, ConfigError
from .nn import Params, add_linear, glorot

PROVENANCE = ("real", "cross-insert", "augment")


class SelectionError(ValueError):
    pass


@dataclass
class Memory:
    M: np.ndarray  # (F, N_s, D_v)
    frame_origin: list[tuple[int, int]]  # (shot index, latent index), 0-based

    @property
    def n_frames(self) -> int:
        return self.M.shape[0]


def latent_frames(z: np.ndarray) -> np.ndarray:
    """(T, gh, gw, D_v) latent shot -> (T, gh·gw, D_v) frames."""
    z = np.asarray(z, dtype=np.float64)
    return z.reshape(z.shape[0], -1, z.shape[-1])


def build_memory(history) -> Memory:
    """Concatenate latent shots along time, oldest first."""
    history = list(history)
    if not history:
        raise SelectionError("memory needs at least one historical shot")
    frames = [latent_frames(z) for z in history]
    ref = frames[0].shape[1:]
    for i, f in enumerate(frames):
        if f.shape[1:] != ref:
            raise SelectionError(f"shot {i} latent shape {f.shape[1:]} != {ref}")
    origin = [(i, r) for i, f in enumerate(frames) for r in range(len(f))]
    return Memory(np.concatenate(frames, axis=0), origin)


# ------------------------------------------------------------------ scoring


def init_selector(rng: np.random.Generator, cfg: Config = DEFAULT, p: Params | None = None) -> Params:
    p = Params() if p is None else p
    d, dt, dv = cfg.model_dim, cfg.caption_dim, cfg.latent_dim
    p.add("sel.queries", rng.normal(scale=0.3, size=(cfg.num_queries, d)))
    add_linear(p, rng, "sel.text", dt, d)
    add_linear(p, rng, "sel.visual", dv, d)
    add_linear(p, rng, "sel.frame", d, d)
    for blk in ("cap_attn", "mem_attn"):
        for w in ("q", "k", "v"):
            p.add(f"sel.{blk}.{w}", glorot(rng, d, d))
    return p


@dataclass
class RelevanceScores:
    s: Tensor  # (..., F, m)
    S: Tensor  # (..., F) = tanh(mean_m s)


def score_frames(M, caption_tokens, caption_mask, p: Params, pool: int = 2) -> RelevanceScores:
    """Score memory frames against a caption.

    M: (..., F, N_s, D_v) with a square spatial grid; caption_tokens:
    (..., T, D_t); caption_mask: (..., T) bool. Leading axes are a batch.
    """
    M = M if isinstance(M, Tensor) else Tensor(M)
    cap = caption_tokens if isinstance(caption_tokens, Tensor) else Tensor(caption_tokens)
    mask = np.asarray(caption_mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise SelectionError("caption has no valid tokens")
    *lead, f, ns, dv = M.shape
    g = int(round(np.sqrt(ns)))
    if g * g != ns or g % pool:
        raise ConfigError(f"memory grid of {ns} tokens cannot be pooled by {pool}")

    # caption -> queries
    t = ops.linear(cap, p["sel.text.w"], p["sel.text.b"])
    q0 = ops.add(p["sel.queries"], np.zeros((*lead, 1, 1)))  # broadcast queries over the batch
    q = ops.matmul(q0, p["sel.cap_attn.q"])
    q1 = ops.add(q0, ops.attention(q, ops.matmul(t, p["sel.cap_attn.k"]), ops.matmul(t, p["sel.cap_attn.v"]),
                                   mask[..., None, :]))

    # spatially reduced memory
    grid = ops.reshape(M, (*lead, f, g, g, dv))
    pooled = ops.avg_pool2d(grid, pool)
    ns2 = (g // pool) ** 2
    m1 = ops.tanh(ops.linear(ops.reshape(pooled, (*lead, f, ns2, dv)), p["sel.visual.w"], p["sel.visual.b"]))
    flat = ops.reshape(m1, (*lead, f * ns2, m1.shape[-1]))
    q2 = ops.add(q1, ops.attention(ops.matmul(q1, p["sel.mem_attn.q"]), ops.matmul(flat, p["sel.mem_attn.k"]),
                                   ops.matmul(flat, p["sel.mem_attn.v"])))

    # per-frame embedding against refined queries
    frame = ops.linear(ops.mean(m1, axis=-2), p["sel.frame.w"], p["sel.frame.b"])
    s = ops.matmul(frame, ops.transpose(q2, tuple(range(len(lead))) + (len(lead) + 1, len(lead))))
    S = ops.tanh(ops.mean(s, axis=-1))
    return RelevanceScores(s, S)


# ---------------------------------------------------------------- selection


@dataclass
class SelectedMemory:
    frames: np.ndarray  # (n, N_s, D_v) raw memory frames
    indices: np.ndarray  # into M, descending score
    scores: np.ndarray


def topk_indices(S: np.ndarray, k: int) -> np.ndarray:
    """Indices of the top min(k, F) scores, descending; ties go to the
    smaller index."""
    if k < 1:
        raise SelectionError("K_sel must be >= 1")
    S = np.asarray(S, dtype=np.float64)
    order = np.lexsort((np.arange(len(S)), -S))
    return order[: min(k, len(S))]


def select_topk(mem: Memory, S, k: int) -> SelectedMemory:
    S = np.asarray(S.data if isinstance(S, Tensor) else S, dtype=np.float64)
    if S.shape != (mem.n_frames,):
        raise SelectionError(f"expected {mem.n_frames} scores, got shape {S.shape}")
    idx = topk_indices(S, k)
    return SelectedMemory(mem.M[idx].copy(), idx, S[idx])


def recent_indices(n_frames: int, k: int) -> np.ndarray:
    """Most recent frames, newest first."""
    k = min(k, n_frames)
    return np.arange(n_frames - 1, n_frames - 1 - k, -1)


def uniform_indices(n_frames: int, k: int) -> np.ndarray:
    """Evenly spaced frames over the whole memory, oldest first."""
    k = min(k, n_frames)
    if k == n_frames:
        return np.arange(n_frames)
    return np.unique(np.round(np.linspace(0, n_frames - 1, k)).astype(np.int64))


def choose_frames(S: np.ndarray, k: int, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Conditioning frames for one item in the given selection mode. The
    returned order is the order used for patchifier assignment."""
    n = len(S)
    if mode == "learned":
        return topk_indices(S, k)
    if mode == "recent":
        return recent_indices(n, k)
    if mode == "uniform":
        return uniform_indices(n, k)
    if mode == "random":
        if rng is None:
            raise SelectionError("random selection needs an rng")
        return rng.permutation(n)[: min(k, n)]
    raise ConfigError(f"unknown selection mode {mode!r}")


# ------------------------------------------------------------ pseudo-labels


@dataclass
class PseudoLabels:
    y: np.ndarray  # (F,)
    provenance: list[str]  # per frame


def group_embeddings(frames: np.ndarray, f_t: int) -> np.ndarray:
    """Reference embedding of each latent frame's pixel group: the mean of
    the per-frame embeddings of its f_t source frames."""
    emb = reference_vectors(frames)
    return emb.reshape(len(frames) // f_t, f_t, -1).mean(axis=1)


def build_pseudo_labels(history, provenance, target_frames: np.ndarray, f_t: int = DEFAULT.f_t) -> PseudoLabels:
    """history: pixel shots (K, H, W, C), oldest first; provenance: one tag
    per shot.

    A real frame's label is its best cosine against the target's frame
    groups, so a frame that reappears verbatim in the target scores 1.
    """
    history = list(history)
    if provenance is None or len(provenance) != len(history):
        raise SelectionError("one provenance tag per historical shot is required")
    tgt = group_embeddings(np.asarray(target_frames), f_t)
    tgt = tgt / np.linalg.norm(tgt, axis=1, keepdims=True)
    ys, prov = [], []
    for shot, tag in zip(history, provenance):
        if tag not in PROVENANCE:
            raise SelectionError(f"unknown provenance {tag!r}")
        n = len(shot) // f_t
        if tag == "cross-insert":
            ys.append(np.full(n, -1.0))
        elif tag == "augment":
            ys.append(np.zeros(n))
        else:
            g = group_embeddings(np.asarray(shot), f_t)
            g = g / np.linalg.norm(g, axis=1, keepdims=True)
            ys.append(np.clip((g @ tgt.T).max(axis=1), -1.0, 1.0))
        prov += [tag] * n
    return PseudoLabels(np.concatenate(ys), prov)


def selection_loss(S: Tensor, y) -> Tensor:
    y = np.asarray(y, dtype=np.float64)
    if S.shape != y.shape:
        raise SelectionError(f"scores {S.shape} and labels {y.shape} differ")
    return ops.mse(S, y)
