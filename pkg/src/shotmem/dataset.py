"""Training data: synthetic corpus, curation, shot inflation and the
precomputed triplet arrays the trainer consumes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .codecs import embed_caption, encode_frames
from .config import DEFAULT, Config, ConfigError
from .curation import filter_corpus, rewrite_referential
from .seeding import derive_seed, rng_for
from .selection import build_pseudo_labels
from .world import MultiShotVideo, generate_story, random_story_spec, unrelated_video

log = logging.getLogger(__name__)

FORMS = ("first-syn-last", "syn-first-last", "first-second-last")


def generate_corpus(cfg: Config = DEFAULT, seed: int | None = None, unrelated_fraction: float = 0.1) -> list[MultiShotVideo]:
    """Coherent stories with two- and three-shot videos in the configured
    ratio, plus a share of unrelated-transition videos for the filter."""
    seed = cfg.seed if seed is None else seed
    videos = []
    for i in range(cfg.corpus_size):
        n_shots = 3 if i % (cfg.two_shot_ratio + 1) == cfg.two_shot_ratio else 2
        rng = rng_for("story", seed, i)
        spec = random_story_spec(rng, n_shots)
        videos.append(generate_story(spec, derive_seed("render", seed, i), video_id=f"v{seed}-{i:05d}"))
    for j in range(int(round(cfg.corpus_size * unrelated_fraction))):
        rng = rng_for("unrelated", seed, j)
        videos.append(unrelated_video(rng, derive_seed("unrel-render", seed, j), 2, video_id=f"u{seed}-{j:05d}"))
    return videos


def curate(videos, cfg: Config = DEFAULT):
    """Filter, then rewrite referential captions of the survivors."""
    report = filter_corpus(videos, cfg)
    keep = set(report.kept_ids)
    out = []
    for v in videos:
        if v.video_id not in keep:
            continue
        anns = [s.annotation for s in v.shots]
        if all(a is not None for a in anns):
            caps = rewrite_referential(v.captions, anns)
            for s, c in zip(v.shots, caps):
                s.caption = c
        out.append(v)
    return out, report


# ---------------------------------------------------------------- inflation


@dataclass
class Triplet:
    shots: list  # three Shot objects; the last is the prediction target
    provenance: list[str]
    form: str
    source_ids: list[str] = field(default_factory=list)

    @property
    def inflated(self) -> bool:
        return self.form != "first-second-last"


AUG_HUE_DEG = 30.0  # half the palette spacing, so shifted colours match no palette


def hue_rotation(degrees: float) -> np.ndarray:
    """3×3 rotation of RGB about the grey axis (row-vector convention)."""
    a = np.deg2rad(degrees)
    k = np.ones(3) / np.sqrt(3.0)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    r = np.cos(a) * np.eye(3) + np.sin(a) * kx + (1 - np.cos(a)) * np.outer(k, k)
    return r.T


def augment_shot(frames: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, str]:
    """Hue rotation by ±30 degrees, plus a horizontal flip half the time."""
    deg = AUG_HUE_DEG if rng.random() < 0.5 else -AUG_HUE_DEG
    out = np.clip(np.asarray(frames) @ hue_rotation(deg), 0.0, 1.0)
    desc = f"hue{deg:+.0f}"
    if rng.random() < 0.5:
        out = out[:, :, ::-1]
        desc += "+flip"
    return np.ascontiguousarray(out), desc


def _qualified(shot, prefix: str):
    from .world.story import ShotAnnotation

    a = shot.annotation
    if a is None:
        return None
    return ShotAnnotation(tuple(f"{prefix}{e}" for e in a.entity_ids), a.env_id, a.labels,
                          {f"{prefix}{e}": c for e, c in a.entity_colors.items()}, a.env_colors)


def inflate_to_triplet(video: MultiShotVideo, corpus, rng: np.random.Generator) -> Triplet:
    from .world.story import Shot

    n = len(video.shots)
    if n == 3:
        return Triplet(list(video.shots), ["real"] * 3, FORMS[2], [video.video_id] * 3)
    if n != 2:
        raise ConfigError(f"inflation expects 2 or 3 shots, got {n}")
    first, last = video.shots
    cross = rng.random() < 0.5
    palette = first.caption.palette
    others = [v for v in corpus if v.video_id != video.video_id
              and all(s.caption.palette != palette for s in v.shots)]
    if cross and not others:
        log.warning("no other video with a different environment; augmenting instead")
        cross = False
    if cross:
        donor = others[int(rng.integers(len(others)))]
        syn = donor.shots[int(rng.integers(len(donor.shots)))]
        syn = Shot(syn.frames, syn.caption, _qualified(syn, f"{donor.video_id}/"))
        tag, src = "cross-insert", donor.video_id
    else:
        frames, _ = augment_shot(first.frames, rng)
        syn = Shot(frames, first.caption.without_refs(), _qualified(first, "aug/"))
        tag, src = "augment", video.video_id
    first_q = Shot(first.frames, first.caption, _qualified(first, ""))
    last_q = Shot(last.frames, last.caption, _qualified(last, ""))
    if rng.random() < 0.5:
        shots, prov, form = [first_q, syn, last_q], ["real", tag, "real"], FORMS[0]
        ids = [video.video_id, src, video.video_id]
    else:
        shots, prov, form = [syn, first_q, last_q], [tag, "real", "real"], FORMS[1]
        ids = [src, video.video_id, video.video_id]
    anns = [s.annotation for s in shots]
    if all(a is not None for a in anns):
        caps = rewrite_referential([s.caption for s in shots], anns)
        shots = [Shot(s.frames, c, s.annotation) for s, c in zip(shots, caps)]
    return Triplet(shots, prov, form, ids)


def build_triplets(corpus, n: int, seed: int) -> list[Triplet]:
    if not corpus:
        raise ConfigError("empty corpus")
    out = []
    for i in range(n):
        rng = rng_for("triplet", seed, i)
        v = corpus[int(rng.integers(len(corpus)))]
        out.append(inflate_to_triplet(v, corpus, rng))
    return out


# ------------------------------------------------------------ array packing


@dataclass
class TripletArrays:
    history: np.ndarray  # (N, F, N_s, D_v) raw latents
    target: np.ndarray  # (N, N_n, D_v) raw latents
    labels: np.ndarray  # (N, F)
    caption: np.ndarray  # (N, T, D_t)
    caption_mask: np.ndarray  # (N, T)
    inflated: np.ndarray  # (N,) bool
    provenance: list  # per item, per frame

    def __len__(self) -> int:
        return len(self.labels)


def pack_triplets(triplets, cfg: Config = DEFAULT) -> TripletArrays:
    hist, tgt, ys, caps, masks, infl, prov = [], [], [], [], [], [], []
    for tr in triplets:
        z = encode_frames(np.stack([s.frames for s in tr.shots]), cfg)  # (3, T, gh, gw, D_v)
        hist.append(z[:2].reshape(-1, cfg.n_spatial, cfg.latent_dim))
        tgt.append(z[2].reshape(-1, cfg.latent_dim))
        pl = build_pseudo_labels([s.frames for s in tr.shots[:2]], tr.provenance[:2], tr.shots[2].frames, cfg.f_t)
        ys.append(pl.y)
        prov.append(pl.provenance)
        e = embed_caption(tr.shots[2].caption, cfg)
        caps.append(e.tokens)
        masks.append(e.mask)
        infl.append(tr.inflated)
    return TripletArrays(np.stack(hist), np.stack(tgt), np.stack(ys), np.stack(caps), np.stack(masks),
                         np.array(infl), prov)


def latent_stats(arr: TripletArrays) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over every latent in the pool."""
    allz = np.concatenate([arr.history.reshape(-1, arr.history.shape[-1]), arr.target.reshape(-1, arr.target.shape[-1])])
    return allz.mean(axis=0), allz.std(axis=0) + 1e-6


def training_pool(cfg: Config = DEFAULT, seed: int | None = None, n: int | None = None) -> TripletArrays:
    """Generate, curate, inflate and pack in one go."""
    seed = cfg.seed if seed is None else seed
    videos = generate_corpus(cfg, seed)
    kept, _ = curate(videos, cfg)
    return pack_triplets(build_triplets(kept, cfg.n_triplets if n is None else n, seed), cfg)
