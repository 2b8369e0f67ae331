"""Autoregressive multi-shot generation with a growing memory bank."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codecs import decode_latent, embed_caption, encode_frames
from .conditioner import patchify_context
from .config import DEFAULT, Config, ConfigError
from .denoiser import DenoiserInput, denoise_velocity, from_tokens
from .model import denormalize, normalize
from .nn import Params
from .seeding import derive_seed
from .selection import build_memory, choose_frames, score_frames
from .world.caption import CaptionError, StructuredCaption
from .world.story import MultiShotVideo, Shot


class SamplingError(ValueError):
    pass


@dataclass
class MemoryBank:
    shots: list = field(default_factory=list)  # raw latent shots (T, gh, gw, D_v)

    def __len__(self) -> int:
        return len(self.shots)

    def append(self, z: np.ndarray) -> None:
        self.shots.append(np.asarray(z, dtype=np.float64))

    def memory(self):
        return build_memory(self.shots)

    @property
    def n_frames(self) -> int:
        return int(sum(z.shape[0] for z in self.shots))


@dataclass
class SelectionTrace:
    shot: int  # 0-based index of the shot being generated
    origin: list  # (shot, latent) per memory frame
    scores: np.ndarray
    chosen: np.ndarray  # memory indices in patchifier order
    token_origin: list  # (memory index, patchifier) per context token

    def rows(self):
        chosen = set(int(i) for i in self.chosen)
        for r, (s, k) in enumerate(self.origin):
            yield s, k, float(self.scores[r]), r in chosen


def shot_seed(seed: int, index: int) -> int:
    return derive_seed("shot", seed, index)


def _context(bank: MemoryBank, cap, cap_mask, params: Params, cfg: Config, shot_index: int):
    mem = bank.memory()
    m = normalize(mem.M, params)
    S = score_frames(m[None], cap[None], cap_mask[None], params).S.data[0]
    rng = np.random.default_rng(derive_seed("select", cfg.seed, shot_index))
    chosen = choose_frames(S, cfg.k_sel, cfg.selection, rng)
    ctx = patchify_context(m[chosen][None], cfg.kernels, params)
    token_origin = [(int(chosen[pos]), l) for pos, l in ctx.origin]
    return ctx, SelectionTrace(shot_index, mem.frame_origin, S, chosen, token_origin)


def sample_next_shot(bank: MemoryBank, caption, params: Params, cfg: Config = DEFAULT, seed: int | None = None,
                     shot_index: int | None = None, first_frame_latent: np.ndarray | None = None):
    """Euler-integrate the velocity field from noise (t=1) to data (t=0).

    Returns the raw latent shot (T, gh, gw, D_v) and the selection trace
    (None for a context-free shot). ``first_frame_latent`` (gh, gw, D_v),
    when given, overwrites latent frame 0 with the clean encoded image at
    every step.
    """
    if cfg.euler_steps < 1:
        raise ConfigError("euler_steps must be >= 1")
    idx = len(bank) if shot_index is None else shot_index
    emb = embed_caption(caption, cfg)
    if emb.valid_len == 0:
        raise SamplingError(f"shot {idx + 1}: empty caption")
    cap, cap_mask = emb.tokens, emb.mask
    ctx, trace = (None, None) if len(bank) == 0 else _context(bank, cap, cap_mask, params, cfg, idx)

    rng = np.random.default_rng(shot_seed(cfg.seed if seed is None else seed, idx))
    n_tok = cfg.latent_frames * cfg.n_spatial
    x = rng.normal(size=(1, n_tok, cfg.latent_dim))
    clamp = None
    if first_frame_latent is not None:
        clamp = normalize(np.asarray(first_frame_latent).reshape(cfg.n_spatial, cfg.latent_dim), params)
    dt = 1.0 / cfg.euler_steps
    for k in range(cfg.euler_steps):
        t = 1.0 - k * dt
        if clamp is not None:
            x[0, : cfg.n_spatial] = clamp
        v = denoise_velocity(DenoiserInput(x, np.array([t]), cap[None], cap_mask[None], ctx), params, cfg).data
        x = x - dt * v
    if clamp is not None:
        x[0, : cfg.n_spatial] = clamp
    z = denormalize(from_tokens(x[0], cfg), params)
    return z, trace


def _parse(c, i: int) -> StructuredCaption:
    if isinstance(c, StructuredCaption):
        return c
    try:
        return StructuredCaption.parse(c)
    except CaptionError as e:
        raise SamplingError(f"shot {i + 1}: {e}") from None


@dataclass
class GeneratedStory:
    video: MultiShotVideo
    bank: MemoryBank
    traces: list


def generate_story_video(captions, params: Params, cfg: Config = DEFAULT, first_image: np.ndarray | None = None,
                         seed: int | None = None, n_shots: int | None = None, video_id: str = "generated") -> GeneratedStory:
    """Generate shot after shot; each shot sees the whole bank so far.

    ``n_shots`` stops early, which yields exactly the prefix of the full
    run."""
    caps = [_parse(c, i) for i, c in enumerate(captions)]
    if not caps:
        raise SamplingError("at least one caption is required")
    if (cfg.mode == "i2msv") != (first_image is not None):
        raise SamplingError("a first image is required in i2msv mode and only there")
    seed = cfg.seed if seed is None else seed
    first_latent = None
    if first_image is not None:
        img = np.asarray(first_image, dtype=np.float64)
        group = np.repeat(img[None], cfg.f_t, axis=0)
        first_latent = encode_frames(group, cfg)[0]
    bank, traces, shots = MemoryBank(), [], []
    for i, cap in enumerate(caps[: n_shots or len(caps)]):
        z, tr = sample_next_shot(bank, cap, params, cfg, seed, i, first_latent if i == 0 else None)
        bank.append(z)
        traces.append(tr)
        shots.append(Shot(decode_latent(z, cfg), cap, None))
    return GeneratedStory(MultiShotVideo(shots, None, seed, video_id), bank, traces)
