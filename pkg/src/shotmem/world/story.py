"""Procedural toy multi-shot videos with ground truth."""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .caption import (
    ACTIONS,
    HUES,
    PALETTES,
    SHAPES,
    TEXTURES,
    CaptionError,
    StructuredCaption,
    Subject,
)

H = W = 32
K = 8
SPEED = 2.0
ENTITY_JITTER = 0.30
ENV_JITTER = 0.12
JITTER_PX = 2  # per-shot framing offset

# Mid-brightness backgrounds spread evenly around the hue circle, so each
# palette has a distinct chroma direction. Second colour is the texture ink.
PAL_S = 0.8
PALETTE_HUE = {"sunset": 0, "desert": 60, "forest": 120, "lagoon": 180, "ocean": 240, "dusk": 300}
PALETTE_RGB = {
    name: (colorsys.hsv_to_rgb(deg / 360.0, PAL_S, 0.7), colorsys.hsv_to_rgb(deg / 360.0, PAL_S, 0.56))
    for name, deg in PALETTE_HUE.items()
}
HUE_RGB = {
    "red": (0.92, 0.12, 0.10),
    "green": (0.15, 0.88, 0.25),
    "blue": (0.15, 0.30, 0.98),
    "yellow": (0.98, 0.90, 0.10),
    "magenta": (0.90, 0.12, 0.85),
    "cyan": (0.10, 0.92, 0.95),
}
# Sprite hues sit on the same circle; a sprite never shares its
# environment's hue.
HUE_DEG = {"red": 0, "yellow": 60, "green": 120, "cyan": 180, "blue": 240, "magenta": 300}
RADIUS = {"zoom-close": 8.0, "zoom-wide": 3.0}
DEFAULT_RADIUS = 5.0
COMPOSE_SPREAD = 0.7
MOVES = {"move-left": (-1, 0), "move-right": (1, 0), "move-up": (0, -1), "move-down": (0, 1)}


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShotPlan:
    subjects: tuple[str, ...]  # entity ids, caption order
    env: str
    action: str = "static"


@dataclass(frozen=True)
class StorySpec:
    shots: tuple[ShotPlan, ...]
    entities: dict  # id -> (shape, hue)
    environments: dict  # id -> (palette, texture)
    pattern: str = "free"

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    def validate(self) -> None:
        for i, plan in enumerate(self.shots):
            for e in plan.subjects:
                if e not in self.entities:
                    raise GenerationError(f"shot {i}: unknown entity {e!r}")
            if plan.env not in self.environments:
                raise GenerationError(f"shot {i}: unknown environment {plan.env!r}")
            if plan.action not in ACTIONS:
                raise GenerationError(f"shot {i}: unknown action {plan.action!r}")
            if len(set(plan.subjects)) != len(plan.subjects):
                raise GenerationError(f"shot {i}: duplicate subject")
            if len(plan.subjects) > 3:
                raise GenerationError(f"shot {i}: at most 3 subjects")

    def key(self) -> str:
        text = repr((self.shots, sorted(self.entities.items()), sorted(self.environments.items()), self.pattern))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class ShotAnnotation:
    entity_ids: tuple[str, ...]
    env_id: str
    labels: np.ndarray  # (K, H, W) int8: 0 background, i+1 = subject i
    entity_colors: dict  # id -> rgb
    env_colors: tuple  # (A, B)

    def mask(self, subject_index: int) -> np.ndarray:
        return self.labels == subject_index + 1


@dataclass
class Shot:
    frames: np.ndarray  # (K, H, W, C)
    caption: StructuredCaption
    annotation: ShotAnnotation | None = None


@dataclass
class MultiShotVideo:
    shots: list[Shot]
    spec: StorySpec | None
    seed: int
    video_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def captions(self) -> list[StructuredCaption]:
        return [s.caption for s in self.shots]

    def frames(self) -> np.ndarray:
        return np.concatenate([s.frames for s in self.shots], axis=0)


# ------------------------------------------------------------------ rendering


def background(colors, texture: str, h: int = H, w: int = W) -> np.ndarray:
    a, b = (np.asarray(c, dtype=np.float64) for c in colors)
    img = np.empty((h, w, 3))
    img[:] = a
    if texture == "grid":
        img[::8, :] = b
        img[:, ::8] = b
    elif texture == "stripes":
        rows = (np.arange(h) // 4) % 2 == 1
        img[rows] = b
    return img


def sprite_mask(shape: str, cx: float, cy: float, r: float, h: int = H, w: int = W) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if shape == "triangle":
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    raise GenerationError(f"unknown shape {shape!r}")


def slot_positions(n: int, w: int = W, h: int = H, action: str = "") -> list[tuple[float, float]]:
    """Sprite centres; a composed shot draws its subjects together."""
    if n == 0:
        return []
    xs = {1: [0.5], 2: [0.3125, 0.6875], 3: [0.21875, 0.5, 0.78125]}[n]
    if action == "compose":
        xs = [0.5 + (x - 0.5) * COMPOSE_SPREAD for x in xs]
    return [(x * w, 0.5 * h) for x in xs]


def motion_offset(k: int) -> float:
    """Displacement along the action at frame k. Paths pass the slot at
    frame 2, so opposite moves cover different ground."""
    return (k - 2) * SPEED


def render_frame(bg: np.ndarray, sprites) -> tuple[np.ndarray, np.ndarray]:
    """sprites: iterable of (shape, rgb, cx, cy, r). Later sprites occlude
    earlier ones, so labels are disjoint by construction."""
    img = bg.copy()
    labels = np.zeros(bg.shape[:2], dtype=np.int8)
    for i, (shape, rgb, cx, cy, r) in enumerate(sprites):
        m = sprite_mask(shape, cx, cy, r, *bg.shape[:2])
        img[m] = rgb
        labels[m] = i + 1
    return img, labels


def _jitter(rng, base, amount):
    return tuple(np.clip(np.asarray(base) + rng.uniform(-amount, amount, size=3), 0.0, 1.0))


def story_colors(spec: StorySpec, seed: int):
    """Exact per-story colours: base colour plus seeded jitter the caption does
    not describe."""
    rng = np.random.default_rng([seed, 7])
    ent = {eid: _jitter(rng, HUE_RGB[spec.entities[eid][1]], ENTITY_JITTER) for eid in sorted(spec.entities)}
    env = {}
    for vid in sorted(spec.environments):
        a, b = PALETTE_RGB[spec.environments[vid][0]]
        env[vid] = (_jitter(rng, a, ENV_JITTER), _jitter(rng, b, ENV_JITTER))
    return ent, env


def earliest_introductions(entity_ids_per_shot) -> list[list[str]]:
    """Reference flags per shot: "new" for first mentions, else
    "same-as-shot-<j>" with j the (1-based) shot of first appearance."""
    first: dict[str, int] = {}
    out = []
    for i, ids in enumerate(entity_ids_per_shot):
        refs = []
        for e in ids:
            refs.append("new" if e not in first else f"same-as-shot-{first[e] + 1}")
        for e in ids:
            first.setdefault(e, i)
        out.append(refs)
    return out


def captions_for(spec: StorySpec) -> list[StructuredCaption]:
    refs = earliest_introductions([p.subjects for p in spec.shots])
    caps = []
    for plan, rr in zip(spec.shots, refs):
        subs = tuple(Subject(*spec.entities[e], ref=r) for e, r in zip(plan.subjects, rr))
        palette, texture = spec.environments[plan.env]
        caps.append(StructuredCaption(subs, palette, texture, plan.action))
    return caps


def generate_story(spec: StorySpec, seed: int, video_id: str = "") -> MultiShotVideo:
    spec.validate()
    ent_rgb, env_rgb = story_colors(spec, seed)
    rng = np.random.default_rng([seed, 11])
    caps = captions_for(spec)
    shots = []
    for i, plan in enumerate(spec.shots):
        bg = background(env_rgb[plan.env], spec.environments[plan.env][1])
        r = RADIUS.get(plan.action, DEFAULT_RADIUS)
        jx, jy = rng.integers(-JITTER_PX, JITTER_PX + 1, size=2)
        move = MOVES.get(plan.action, (0, 0))
        frames = np.empty((K, H, W, 3))
        labels = np.empty((K, H, W), dtype=np.int8)
        # slots follow sorted descriptor order, as in the canonical rendering
        order = sorted(plan.subjects, key=lambda e: spec.entities[e])
        slots = [slot_positions(len(plan.subjects), action=plan.action)[order.index(e)] for e in plan.subjects]
        for k in range(K):
            off = motion_offset(k)
            sprites = []
            for e, (sx, sy) in zip(plan.subjects, slots):
                shape = spec.entities[e][0]
                sprites.append((shape, ent_rgb[e], sx + jx + move[0] * off, sy + jy + move[1] * off, r))
            frames[k], labels[k] = render_frame(bg, sprites)
        for j, e in enumerate(plan.subjects):
            if not (labels == j + 1).any():
                raise GenerationError(f"shot {i}: entity {e!r} is off-canvas or hidden for the whole shot")
        ann = ShotAnnotation(
            entity_ids=tuple(plan.subjects),
            env_id=plan.env,
            labels=labels,
            entity_colors={e: ent_rgb[e] for e in plan.subjects},
            env_colors=env_rgb[plan.env],
        )
        shots.append(Shot(frames, caps[i], ann))
    return MultiShotVideo(shots, spec, seed, video_id or f"story-{spec.key()}-{seed}")


def resolve_caption(caption: StructuredCaption, registry, shot_number: int | None = None) -> StructuredCaption:
    """Check every same-as flag against ``registry`` (earlier captions, in
    order). Errors name the dangling shot."""
    for s in caption.subjects:
        j = s.ref_shot
        if j is None:
            continue
        if j < 1 or j > len(registry) or (shot_number is not None and j >= shot_number):
            raise CaptionError(f"dangling reference to shot {j}")
        if s.descriptor not in {t.descriptor for t in registry[j - 1].subjects}:
            raise CaptionError(f"dangling reference to shot {j}: no {s.shape} {s.hue} there")
    return caption


def render_caption_canonical(caption: StructuredCaption, registry=(), h: int = H, w: int = W) -> np.ndarray:
    """Canonical rendering of what a caption describes: base colours, slot
    positions at mid-shot along the action, default radius,
    subjects in sorted descriptor order."""
    resolve_caption(caption, list(registry))
    palette = caption.palette or "lagoon"
    bg = background(PALETTE_RGB[palette], caption.texture or "plain", h, w)
    subs = sorted(s.descriptor for s in caption.subjects)
    r = RADIUS.get(caption.action, DEFAULT_RADIUS)
    dx, dy = (m * motion_offset(K // 2) for m in MOVES.get(caption.action, (0, 0)))
    sprites = [(shape, HUE_RGB[hue], x + dx, y + dy, r)
               for (shape, hue), (x, y) in zip(subs, slot_positions(len(subs), w, h, caption.action))]
    img, _ = render_frame(bg, sprites)
    return img


# ------------------------------------------------------- random story specs


def _pick_entities(rng, n, exclude_hues=()):
    hues = [h for h in HUES if h not in exclude_hues]
    chosen = rng.choice(len(hues), size=n, replace=False)
    return [(SHAPES[int(rng.integers(len(SHAPES)))], hues[int(c)]) for c in chosen]


def _action_for(rng, n_subjects):
    pool = ["static", "move-left", "move-right", "move-up", "move-down", "zoom-wide"]
    if n_subjects == 1:
        pool.append("zoom-close")
    if n_subjects >= 2:
        pool.append("compose")
    return pool[int(rng.integers(len(pool)))]


def random_story_spec(rng: np.random.Generator, n_shots: int, exclude_palettes=(), exclude_hues=()) -> StorySpec:
    """A coherent story: one environment, adjacent shots share at least one
    entity, and no two shots share both subjects and action."""
    palettes = [p for p in PALETTES if p not in exclude_palettes]
    palette = palettes[int(rng.integers(len(palettes)))]
    texture = TEXTURES[int(rng.integers(len(TEXTURES)))]
    exclude_hues = set(exclude_hues) | set(clashing_hues(palette))
    n_ent = int(rng.integers(1, min(3, len(HUES) - len(exclude_hues)) + 1))
    descs = _pick_entities(rng, n_ent, exclude_hues)
    entities = {f"e{i}": d for i, d in enumerate(descs)}
    ids = list(entities)
    shots = []
    prev: tuple[str, ...] = ()
    for i in range(n_shots):
        for _ in range(50):
            if i == 0:
                k = int(rng.integers(1, min(2, n_ent) + 1))
                subj = tuple(ids[:k])
            else:
                keep = prev[int(rng.integers(len(prev)))]
                others = [e for e in ids if e != keep]
                extra = [e for e in others if rng.random() < 0.4]
                subj = tuple(sorted({keep, *extra}, key=ids.index))[:3]
            action = _action_for(rng, len(subj))
            plan = ShotPlan(subj, "v0", action)
            if all((plan.subjects, plan.action) != (p.subjects, p.action) for p in shots):
                break
        shots.append(plan)
        prev = plan.subjects
    return StorySpec(tuple(shots), entities, {"v0": (palette, texture)}, "free")


def clashing_hues(palette: str) -> list[str]:
    return [h for h, deg in HUE_DEG.items() if deg == PALETTE_HUE[palette]]


def _hue_gap(p: str, q: str) -> int:
    d = abs(PALETTE_HUE[p] - PALETTE_HUE[q]) % 360
    return min(d, 360 - d)


def unrelated_video(rng: np.random.Generator, seed: int, n_shots: int = 2, video_id: str = "") -> MultiShotVideo:
    """Shots drawn from independent single-shot stories with disjoint sprite
    hues and adjacent palettes on opposite sides of the hue circle: a video
    with completely irrelevant transitions. Palettes a third of the circle
    apart come too close once colours are jittered."""
    shots = []
    used_p, used_h = [], []
    for i in range(n_shots):
        near = [p for p in PALETTES if used_p and _hue_gap(p, used_p[-1]) < 180]
        spec = random_story_spec(rng, 1, exclude_palettes=near, exclude_hues=used_h)
        used_p.append(spec.environments["v0"][0])
        used_h.extend(spec.entities[e][1] for e in spec.shots[0].subjects)
        shots.append(generate_story(spec, seed * 31 + i).shots[0])
    return MultiShotVideo(shots, None, seed, video_id or f"unrelated-{seed}", {"unrelated": True})
