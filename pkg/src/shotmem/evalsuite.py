"""Inter-shot, semantic and intra-shot metrics for toy multi-shot videos.

Subjects are located by colour: pixels that differ from the expected
environment colours are assigned to the annotated entity of nearest hue,
so generated and ground-truth videos are measured the same way.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .codecs import reference_vectors
from .world.story import render_caption_canonical

CROP = 32
SUBJECT_THRESHOLD = 0.15  # colour distance from the frame's median colour
RGB_WEIGHT = 0.5  # per unit RGB distance, against hue gap / 180


class EvalError(ValueError):
    pass


# -------------------------------------------------------------- segmentation


def nearest_colour_labels(frames: np.ndarray, colours: np.ndarray) -> np.ndarray:
    """Index of the nearest palette colour for every pixel."""
    d = ((frames[..., None, :] - colours) ** 2).sum(axis=-1)
    return d.argmin(axis=-1)


def hue_degrees(rgb: np.ndarray) -> np.ndarray:
    """Hue angle in [0, 360) of RGB values in [0, 1]; greys get hue 0."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx, mn = rgb.max(axis=-1), rgb.min(axis=-1)
    c = np.where(mx > mn, mx - mn, 1.0)
    h = np.where(mx == r, (g - b) / c % 6, np.where(mx == g, (b - r) / c + 2, (r - g) / c + 4))
    return np.where(mx > mn, 60.0 * h, 0.0) % 360.0


def hue_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % 360.0
    return np.minimum(d, 360.0 - d)


def entity_masks(frames: np.ndarray, annotation) -> dict[str, np.ndarray]:
    """Per-entity (K, H, W) masks. Pixels near the frame's median colour are
    background; the rest go to whichever expected colour (annotated entities
    and the two environment colours) is nearest in hue, with RGB distance
    weighted in to separate colours of equal hue. Hue survives the colour
    drift of generated sprites far better than exact RGB does."""
    frames = np.asarray(frames, dtype=np.float64)
    ids = list(annotation.entity_ids)
    if not ids:
        return {}
    cols = np.asarray([annotation.entity_colors[e] for e in ids] + list(annotation.env_colors), dtype=np.float64)
    gap = hue_gap(hue_degrees(frames)[..., None], hue_degrees(cols))
    rgb = np.sqrt(((frames[..., None, :] - cols) ** 2).sum(axis=-1))
    lab = (gap / 180.0 + RGB_WEIGHT * rgb).argmin(axis=-1)
    fg = subject_mask(frames)
    return {e: fg & (lab == i) for i, e in enumerate(ids)}


def _resize_nearest(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    ys = (np.arange(size) * h // size).clip(0, h - 1)
    xs = (np.arange(size) * w // size).clip(0, w - 1)
    return img[ys][:, xs]


def masked_crop(frame: np.ndarray, mask: np.ndarray) -> np.ndarray | None:
    if not mask.any():
        return None
    ys, xs = np.nonzero(mask)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    crop = np.where(mask[..., None], frame, 0.0)[y0:y1, x0:x1]
    return _resize_nearest(crop, CROP)


def crop_embeddings(frames: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Reference embeddings of the masked crops of non-empty frames, plus
    the number of empty frames."""
    crops = [masked_crop(f, m) for f, m in zip(frames, mask)]
    ok = [c for c in crops if c is not None]
    if not ok:
        return np.zeros((0, 8 * 8 * frames.shape[-1])), len(crops)
    return reference_vectors(np.stack(ok)), len(crops) - len(ok)


def background_fill(frames: np.ndarray, entity_mask: np.ndarray) -> np.ndarray:
    """Entity pixels replaced by the mean of the remaining pixels."""
    out = np.array(frames, dtype=np.float64)
    for k in range(len(out)):
        bg = ~entity_mask[k]
        fill = out[k][bg].mean(axis=0) if bg.any() else np.zeros(out.shape[-1])
        out[k][~bg] = fill
    return out


def _mean_pair_cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float((a @ b.T).mean())


# ------------------------------------------------------------ inter-shot


@dataclass
class PairScore:
    shots: tuple[int, int]
    key: str  # entity or environment id
    score: float
    flagged: bool = False


def _shared_pairs(annotations, attr):
    out = []
    n = len(annotations)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = annotations[i], annotations[j]
            if attr == "entity":
                for e in a.entity_ids:
                    if e in b.entity_ids:
                        out.append((i, j, e))
            elif a.env_id == b.env_id:
                out.append((i, j, a.env_id))
    return out


def character_pairs(video, annotations) -> list[PairScore]:
    shots = video.shots
    if len(annotations) != len(shots):
        raise EvalError(f"{len(shots)} shots but {len(annotations)} annotations")
    cache = {}

    def emb(i, e):
        if (i, e) not in cache:
            m = entity_masks(shots[i].frames, annotations[i])[e]
            cache[(i, e)] = crop_embeddings(shots[i].frames, m)
        return cache[(i, e)]

    out = []
    for i, j, e in _shared_pairs(annotations, "entity"):
        (ea, na), (eb, nb) = emb(i, e), emb(j, e)
        k_i, k_j = len(shots[i].frames), len(shots[j].frames)
        if na > k_i / 2 or nb > k_j / 2 or not len(ea) or not len(eb):
            out.append(PairScore((i, j), e, 0.0, True))
        else:
            out.append(PairScore((i, j), e, _mean_pair_cosine(ea, eb)))
    return out


def environment_pairs(video, annotations) -> list[PairScore]:
    shots = video.shots
    if len(annotations) != len(shots):
        raise EvalError(f"{len(shots)} shots but {len(annotations)} annotations")
    cache = {}

    def emb(i):
        if i not in cache:
            masks = entity_masks(shots[i].frames, annotations[i])
            union = np.zeros(shots[i].frames.shape[:3], dtype=bool)
            for m in masks.values():
                union |= m
            cache[i] = (reference_vectors(background_fill(shots[i].frames, union)), union.reshape(len(union), -1).all(axis=1))
        return cache[i]

    out = []
    for i, j, v in _shared_pairs(annotations, "env"):
        (ea, fa), (eb, fb) = emb(i), emb(j)
        if fa.mean() > 0.5 or fb.mean() > 0.5:
            out.append(PairScore((i, j), v, 0.0, True))
        else:
            out.append(PairScore((i, j), v, _mean_pair_cosine(ea[~fa], eb[~fb])))
    return out


def _mean_or_nan(pairs) -> float:
    return float(np.mean([p.score for p in pairs])) if pairs else float("nan")


def character_consistency(video, annotations) -> float:
    return _mean_or_nan(character_pairs(video, annotations))


def environment_consistency(video, annotations) -> float:
    return _mean_or_nan(environment_pairs(video, annotations))


# ------------------------------------------------------------- semantics


def semantic_alignment_per_shot(video, captions=None) -> list[float | None]:
    caps = list(video.captions if captions is None else captions)
    if not video.shots:
        raise EvalError("empty video")
    out = []
    for i, (shot, cap) in enumerate(zip(video.shots, caps)):
        try:
            ref = reference_vectors(render_caption_canonical(cap, caps[:i]))
        except Exception:  # noqa: BLE001 - a shot that cannot be rendered is skipped
            out.append(None)
            continue
        m = reference_vectors(shot.frames).mean(axis=0)
        out.append(float(ref @ m / np.linalg.norm(m)))
    return out


def semantic_alignment(video, captions=None) -> float:
    vals = [v for v in semantic_alignment_per_shot(video, captions) if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


# ------------------------------------------------------------ intra-shot


def _centred(v: np.ndarray) -> np.ndarray:
    v = v - v.mean(axis=-1, keepdims=True)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def subject_mask(frames: np.ndarray) -> np.ndarray:
    """Pixels far from their frame's median colour."""
    med = np.median(frames.reshape(len(frames), -1, frames.shape[-1]), axis=1)
    return np.linalg.norm(frames - med[:, None, None, :], axis=-1) > SUBJECT_THRESHOLD


def _adjacent_cosine(desc: np.ndarray) -> float:
    d = _centred(desc)
    same = np.all(desc[1:] == desc[:-1], axis=-1)
    cos = (d[1:] * d[:-1]).sum(axis=-1)
    return float(np.where(same, 1.0, cos).mean())


def intra_shot(frames: np.ndarray) -> tuple[float, float, float]:
    """(subject consistency, background consistency, dynamic degree)."""
    frames = np.asarray(frames, dtype=np.float64)
    if len(frames) < 2:
        raise EvalError("need at least 2 frames per shot")
    m = subject_mask(frames)
    subj = reference_vectors(np.where(m[..., None], frames, 0.0))
    back = reference_vectors(np.where(m[..., None], 0.0, frames))
    dyn = float(np.abs(frames[1:] - frames[:-1]).mean())
    return _adjacent_cosine(subj), _adjacent_cosine(back), dyn


def intra_shot_metrics(video) -> tuple[float, float, float]:
    vals = np.array([intra_shot(s.frames) for s in video.shots])
    return tuple(float(x) for x in vals.mean(axis=0))


# ---------------------------------------------------------------- report


@dataclass
class MetricsReport:
    character_consistency: float
    environment_consistency: float
    inter_avg: float
    semantic_alignment: float
    subject_consistency: float
    background_consistency: float
    intra_avg: float
    dynamic_degree: float
    aesthetic_quality: float | None = None  # needs a learned model; not measured
    flagged_pairs: int = 0
    per_shot_alignment: list = field(default_factory=list)

    COLUMNS = ("character_consistency", "environment_consistency", "inter_avg", "semantic_alignment",
               "subject_consistency", "background_consistency", "aesthetic_quality", "intra_avg", "dynamic_degree")

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self.COLUMNS}


def _nanmean2(a: float, b: float) -> float:
    vals = [v for v in (a, b) if not np.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def evaluate_video(video, annotations, captions=None) -> MetricsReport:
    cp = character_pairs(video, annotations)
    ep = environment_pairs(video, annotations)
    cc, ec = _mean_or_nan(cp), _mean_or_nan(ep)
    per = semantic_alignment_per_shot(video, captions)
    sa = [v for v in per if v is not None]
    subj, back, dyn = intra_shot_metrics(video)
    return MetricsReport(cc, ec, _nanmean2(cc, ec), float(np.mean(sa)) if sa else float("nan"), subj, back,
                         (subj + back) / 2.0, dyn, None, sum(p.flagged for p in cp + ep), per)


def aggregate(reports: list[MetricsReport]) -> dict:
    out = {}
    for k in MetricsReport.COLUMNS:
        vals = [getattr(r, k) for r in reports]
        vals = [v for v in vals if v is not None and not np.isnan(v)]
        out[k] = float(np.mean(vals)) if vals else None
    return out


def write_report_csv(path, ids, reports: list[MetricsReport]) -> None:
    cols = MetricsReport.COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("video_id",) + cols)
        fmt = lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))
        for vid, r in zip(ids, reports):
            row = r.row()
            w.writerow([vid] + [fmt(row[c]) for c in cols])
        agg = aggregate(reports)
        w.writerow(["mean"] + [fmt(agg[c]) for c in cols])
