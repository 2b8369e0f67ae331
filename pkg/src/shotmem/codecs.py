"""Fixed, non-learned codecs: latent video codec, caption embedder, and the
reference frame embedder used for pseudo-labels, filtering and metrics.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import DEFAULT, Config, ConfigError
from .world.caption import StructuredCaption

REF_GRID = 8


@dataclass(frozen=True)
class CaptionEmbedding:
    tokens: np.ndarray  # (T, D_t)
    valid_len: int
    truncated: bool = False

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.tokens.shape[0]) < self.valid_len


@dataclass(frozen=True)
class ReferenceEmbedding:
    vec: np.ndarray
    fallback: bool = False


# ---------------------------------------------------------------- video codec


def _structured_basis(f_t: int, f_s: int, c: int) -> list[np.ndarray]:
    """Low-frequency space-time patterns: per-channel DC, then luminance
    left/right, top/bottom, quadrant checker, centre/surround, and a temporal
    difference."""
    t = np.arange(f_t)[:, None, None, None]
    y = (np.arange(f_s) + 0.5 - f_s / 2)[None, :, None, None]
    x = (np.arange(f_s) + 0.5 - f_s / 2)[None, None, :, None]
    ones = np.ones((f_t, f_s, f_s, c))
    basis = []
    for ch in range(c):
        v = np.zeros((f_t, f_s, f_s, c))
        v[..., ch] = 1.0
        basis.append(v)
    basis.append(ones * np.sign(x))
    basis.append(ones * np.sign(y))
    basis.append(ones * np.sign(x) * np.sign(y))
    centre = (np.abs(x) < f_s / 4) & (np.abs(y) < f_s / 4)
    basis.append(ones * np.where(centre, 1.0, -1.0 / 3.0))
    if f_t > 1:
        basis.append(ones * np.where(t < f_t / 2, 1.0, -1.0))
    return [b.reshape(-1) for b in basis]


@lru_cache(maxsize=32)
def projection(f_t: int, f_s: int, c: int, d_v: int, codec_seed: int) -> np.ndarray:
    """(f_t·f_s·f_s·c, d_v) matrix with orthonormal columns.

    Columns span a fixed low-frequency subspace (topped up with seeded random
    directions when d_v exceeds it), mixed by a seeded random rotation.
    """
    n = f_t * f_s * f_s * c
    if d_v > n:
        raise ConfigError("latent_dim exceeds patch size")
    rng = np.random.default_rng([codec_seed, 0x0C0DEC])
    cols = _structured_basis(f_t, f_s, c)[:d_v]
    while len(cols) < d_v:
        cols.append(rng.normal(size=n))
    q, r = np.linalg.qr(np.stack(cols, axis=1))
    q = q * np.sign(np.diag(r))
    rot, rr = np.linalg.qr(rng.normal(size=(d_v, d_v)))
    rot = rot * np.sign(np.diag(rr))
    w = q @ rot
    w.setflags(write=False)
    return w


def _check_dims(frames_shape, cfg: Config) -> None:
    k, h, w, c = frames_shape[-4:]
    if h % cfg.f_s or w % cfg.f_s:
        raise ConfigError(f"frame size {h}x{w} not divisible by f_s={cfg.f_s}")
    if k % cfg.f_t:
        raise ConfigError(f"{k} frames not divisible by f_t={cfg.f_t}")
    if c != cfg.channels:
        raise ConfigError(f"expected {cfg.channels} channels, got {c}")


def encode_frames(frames: np.ndarray, cfg: Config = DEFAULT, codec_seed: int | None = None) -> np.ndarray:
    """(..., K, H, W, C) pixels -> (..., K/f_t, H/f_s, W/f_s, D_v) latents."""
    frames = np.asarray(frames, dtype=np.float64)
    _check_dims(frames.shape, cfg)
    seed = cfg.codec_seed if codec_seed is None else codec_seed
    *lead, k, h, w, c = frames.shape
    ft, fs = cfg.f_t, cfg.f_s
    r = frames.reshape(*lead, k // ft, ft, h // fs, fs, w // fs, fs, c)
    nl = len(lead)
    perm = tuple(range(nl)) + tuple(nl + i for i in (0, 2, 4, 1, 3, 5, 6))
    patches = r.transpose(perm).reshape(*lead, k // ft, h // fs, w // fs, ft * fs * fs * c)
    return patches @ projection(ft, fs, c, cfg.latent_dim, seed)


def decode_frames(z: np.ndarray, cfg: Config = DEFAULT, codec_seed: int | None = None, clamp: bool = True) -> np.ndarray:
    """Transpose projection per patch. ``clamp=False`` keeps raw values for
    round-trip checks; rendering clamps to [0, 1]."""
    z = np.asarray(z, dtype=np.float64)
    seed = cfg.codec_seed if codec_seed is None else codec_seed
    ft, fs, c = cfg.f_t, cfg.f_s, cfg.channels
    if z.shape[-1] != cfg.latent_dim:
        raise ConfigError(f"latent channel dim {z.shape[-1]} != {cfg.latent_dim}")
    *lead, t, gh, gw, _ = z.shape
    patches = z @ projection(ft, fs, c, cfg.latent_dim, seed).T
    r = patches.reshape(*lead, t, gh, gw, ft, fs, fs, c)
    nl = len(lead)
    perm = tuple(range(nl)) + tuple(nl + i for i in (0, 3, 1, 4, 2, 5, 6))
    frames = r.transpose(perm).reshape(*lead, t * ft, gh * fs, gw * fs, c)
    return np.clip(frames, 0.0, 1.0) if clamp else frames


def encode_shot(shot, cfg: Config = DEFAULT, codec_seed: int | None = None) -> np.ndarray:
    return encode_frames(shot.frames, cfg, codec_seed)


def decode_latent(z: np.ndarray, cfg: Config = DEFAULT, codec_seed: int | None = None, clamp: bool = True) -> np.ndarray:
    return decode_frames(z, cfg, codec_seed, clamp)


# ------------------------------------------------------------ caption encoder


@lru_cache(maxsize=4096)
def token_vector(token: str, dim: int, seed: int = 0) -> np.ndarray:
    h = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=16).digest()
    v = np.random.default_rng(int.from_bytes(h, "little")).normal(size=dim)
    v = v / np.linalg.norm(v)
    v.setflags(write=False)
    return v


def embed_caption(caption: "StructuredCaption | str | None", cfg: Config = DEFAULT) -> CaptionEmbedding:
    if caption is None or caption == "":
        toks: list[str] = []
    else:
        if isinstance(caption, str):
            caption = StructuredCaption.parse(caption)
        toks = caption.tokens()
    t, d = cfg.caption_tokens, cfg.caption_dim
    truncated = len(toks) > t
    if truncated:
        warnings.warn(f"caption has {len(toks)} tokens, truncated to {t}", stacklevel=2)
        toks = toks[:t]
    out = np.zeros((t, d))
    for i, tok in enumerate(toks):
        out[i] = token_vector(tok, d)
    return CaptionEmbedding(out, len(toks), truncated)


# --------------------------------------------------------- reference embedder


def reference_vectors(frames: np.ndarray) -> np.ndarray:
    """Batch form: (..., H, W, C) -> (..., 8·8·C) unit vectors.

    All-zero frames map to e1.
    """
    frames = np.asarray(frames, dtype=np.float64)
    *lead, h, w, c = frames.shape
    if h % REF_GRID or w % REF_GRID:
        raise ConfigError(f"frame size {h}x{w} not divisible by {REF_GRID}")
    pooled = frames.reshape(*lead, REF_GRID, h // REF_GRID, REF_GRID, w // REF_GRID, c).mean(axis=(-4, -2))
    flat = pooled.reshape(*lead, REF_GRID * REF_GRID * c)
    norm = np.linalg.norm(flat, axis=-1, keepdims=True)
    zero = norm == 0
    e1 = np.zeros(flat.shape[-1])
    e1[0] = 1.0
    return np.where(zero, e1, flat / np.where(zero, 1.0, norm))


def embed_frame_reference(frame: np.ndarray) -> ReferenceEmbedding:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise ConfigError("expected a single H×W×C frame")
    return ReferenceEmbedding(reference_vectors(frame), fallback=not np.any(frame))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
