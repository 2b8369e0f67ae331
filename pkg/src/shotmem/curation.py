"""Corpus curation: hard-cut detection, referential caption rewriting and
quality filtering."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .codecs import reference_vectors
from .config import DEFAULT, Config, ConfigError
from .world.caption import CaptionError, StructuredCaption
from .world.story import earliest_introductions

DROP_REASONS = ("keyword", "irrelevant-transition", "near-duplicate", "too-few-shots")


@dataclass
class BoundarySet:
    cuts: list[int]  # frame index where a new shot begins
    scores: list[float]
    threshold: float = 0.0
    too_few_shots: bool = False

    def shot_starts(self) -> list[int]:
        return [0] + list(self.cuts)

    def split(self, frames: np.ndarray) -> list[np.ndarray]:
        edges = self.shot_starts() + [len(frames)]
        return [frames[a:b] for a, b in zip(edges[:-1], edges[1:])]


def frame_differences(frames: np.ndarray) -> np.ndarray:
    f = np.asarray(frames, dtype=np.float64)
    return np.abs(f[1:] - f[:-1]).reshape(len(f) - 1, -1).mean(axis=1)


def detect_shot_boundaries(frames: np.ndarray, k_sigma: float = 3.0) -> BoundarySet:
    """Cut before frame t+1 when the mean absolute difference to frame t
    exceeds mean + k_sigma * std of the whole difference series."""
    frames = np.asarray(frames)
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    d = frame_differences(frames)
    thr = float(d.mean() + k_sigma * d.std())
    # the 1e-12 floor keeps float noise on constant footage from counting
    idx = [int(t) + 1 for t in np.flatnonzero((d > thr) & (d > 1e-12))]
    return BoundarySet(idx, [float(d[i - 1]) for i in idx], thr, too_few_shots=len(idx) == 0)


def boundary_f1(predicted, truth) -> float:
    p, t = set(predicted), set(truth)
    if not p and not t:
        return 1.0
    tp = len(p & t)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(p), tp / len(t)
    return 2 * prec * rec / (prec + rec)


def rewrite_referential(captions: list[StructuredCaption], annotations) -> list[StructuredCaption]:
    """Set each subject's flag from the annotated entity ids: first mention
    stays "new", later ones point at the earliest shot showing the entity.

    ``annotations`` holds, per shot, the entity ids in caption order (or
    objects with an ``entity_ids`` attribute)."""
    ids = [tuple(getattr(a, "entity_ids", a)) for a in annotations]
    if len(ids) != len(captions):
        raise CaptionError(f"{len(captions)} captions but {len(ids)} annotations")
    seen: dict[str, tuple[str, str]] = {}
    problems = []
    for i, (cap, ent) in enumerate(zip(captions, ids), 1):
        if len(cap.subjects) != len(ent):
            problems.append(f"shot {i}: {len(cap.subjects)} subjects vs entities {list(ent)}")
            continue
        for s, e in zip(cap.subjects, ent):
            if seen.setdefault(e, s.descriptor) != s.descriptor:
                problems.append(f"shot {i}: entity {e} is {seen[e]} earlier but {s.descriptor} here")
    if problems:
        raise CaptionError("unmatched entities: " + "; ".join(problems))
    refs = earliest_introductions(ids)
    return [cap.with_refs(r) for cap, r in zip(captions, refs)]


# ------------------------------------------------------------------ filtering


def shot_signature(frames: np.ndarray) -> np.ndarray:
    """Mean reference embedding of a shot, centred and renormalised.

    Centring removes the shared grey component all non-negative colour
    vectors carry, so the cosine tracks colour and layout differences.
    """
    m = reference_vectors(frames).mean(axis=0)
    m = m - m.mean()
    n = np.linalg.norm(m)
    if n < 1e-12:
        out = np.zeros_like(m)
        out[0] = 1.0
        return out
    return m / n


def shot_similarity(shots) -> np.ndarray:
    sig = np.stack([shot_signature(s) for s in shots])
    return sig @ sig.T


@dataclass
class FilterVerdict:
    video_id: str
    kept: bool
    reason: str = ""
    score: float = float("nan")

    @property
    def verdict(self) -> str:
        return "kept" if self.kept else "dropped"


@dataclass
class FilterReport:
    verdicts: list[FilterVerdict] = field(default_factory=list)

    @property
    def kept_ids(self) -> list[str]:
        return [v.video_id for v in self.verdicts if v.kept]

    def by_id(self) -> dict[str, FilterVerdict]:
        return {v.video_id: v for v in self.verdicts}

    def counts(self) -> dict[str, int]:
        out = {"kept": 0, **{r: 0 for r in DROP_REASONS}}
        for v in self.verdicts:
            out["kept" if v.kept else v.reason] += 1
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["video_id", "verdict", "reason", "score"])
            for v in self.verdicts:
                w.writerow([v.video_id, v.verdict, v.reason, "" if np.isnan(v.score) else f"{v.score:.6f}"])


def _caption_text(video) -> str:
    return " ".join(str(c) for c in video.captions).lower()


def filter_video(video, cfg: Config = DEFAULT) -> FilterVerdict:
    vid = getattr(video, "video_id", "")
    if len(video.shots) < 2:
        return FilterVerdict(vid, False, "too-few-shots")
    text = _caption_text(video)
    for word in cfg.blocklist:
        if word.lower() in text:
            return FilterVerdict(vid, False, "keyword")
    sim = shot_similarity([s.frames for s in video.shots])
    adj = float(min(sim[i, i + 1] for i in range(len(sim) - 1)))
    if adj < cfg.tau_low:
        return FilterVerdict(vid, False, "irrelevant-transition", adj)
    upper = sim[np.triu_indices(len(sim), 1)]
    top = float(upper.max())
    if top > cfg.tau_high:
        return FilterVerdict(vid, False, "near-duplicate", top)
    return FilterVerdict(vid, True, "", top)


def filter_corpus(videos, cfg: Config = DEFAULT, tau_low: float | None = None, tau_high: float | None = None) -> FilterReport:
    """Keyword blocklist, then adjacent-shot relevance, then near-duplicate
    check; the first failing stage is the drop reason."""
    lo = cfg.tau_low if tau_low is None else tau_low
    hi = cfg.tau_high if tau_high is None else tau_high
    if lo >= hi:
        raise ConfigError(f"tau_low ({lo}) must be < tau_high ({hi})")
    cfg = cfg.replace(tau_low=lo, tau_high=hi)
    return FilterReport([filter_video(v, cfg) for v in videos])
