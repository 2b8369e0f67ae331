"""The full next-shot model: selector, conditioner and denoiser sharing one
parameter store, plus frozen latent normalisation statistics."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, ops
from .conditioner import init_conditioner, patchify_context
from .config import DEFAULT, Config
from .denoiser import DenoiserInput, denoise_velocity, init_denoiser
from .nn import Params
from .seeding import rng_for
from .selection import init_selector, score_frames


def init_model(cfg: Config = DEFAULT, seed: int | None = None, mean=None, std=None) -> Params:
    seed = cfg.seed if seed is None else seed
    p = Params()
    p.add("norm.mean", np.zeros(cfg.latent_dim) if mean is None else np.asarray(mean, dtype=np.float64), frozen=True)
    p.add("norm.std", np.ones(cfg.latent_dim) if std is None else np.asarray(std, dtype=np.float64), frozen=True)
    init_selector(rng_for("init-selector", seed), cfg, p)
    init_conditioner(rng_for("init-conditioner", seed), cfg, p)
    init_denoiser(rng_for("init-denoiser", seed), cfg, p)
    return p


def normalize(z: np.ndarray, p: Params) -> np.ndarray:
    return (z - p["norm.mean"].data) / p["norm.std"].data


def denormalize(x: np.ndarray, p: Params) -> np.ndarray:
    return x * p["norm.std"].data + p["norm.mean"].data


def context_from_selection(memory_norm: np.ndarray, chosen: np.ndarray, p: Params, cfg: Config):
    """memory_norm: (B, F, N_s, D_v); chosen: (B, n) frame indices in
    patchifier order. Selected values are constants for the graph."""
    chosen = np.asarray(chosen, dtype=np.int64)
    rows = np.arange(memory_norm.shape[0])[:, None]
    frames = Tensor(memory_norm[rows, chosen])
    return patchify_context(frames, cfg.kernels, p)


def velocity(x_t: np.ndarray, t: np.ndarray, caption: np.ndarray, caption_mask: np.ndarray, context, p: Params,
             cfg: Config = DEFAULT) -> Tensor:
    return denoise_velocity(DenoiserInput(x_t, t, caption, caption_mask, context), p, cfg)


def scores(memory_norm: np.ndarray, caption: np.ndarray, caption_mask: np.ndarray, p: Params):
    return score_frames(Tensor(memory_norm), caption, caption_mask, p)


def generation_loss(x0: np.ndarray, eps: np.ndarray, t: np.ndarray, caption, caption_mask, context, p: Params,
                    cfg: Config = DEFAULT) -> Tensor:
    tt = t[:, None, None]
    x_t = (1.0 - tt) * x0 + tt * eps
    v = velocity(x_t, t, caption, caption_mask, context, p, cfg)
    return ops.mse(v, eps - x0)
