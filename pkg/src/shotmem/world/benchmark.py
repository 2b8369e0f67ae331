"""Six-shot evaluation cases for the three storytelling patterns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ConfigError
from .caption import PALETTES, TEXTURES
from .story import HUE_DEG, PALETTE_HUE, MultiShotVideo, ShotPlan, StorySpec, _action_for, _pick_entities, generate_story

PATTERNS = ("main-subject", "insert-recall", "composable")
N_SHOTS = 6


@dataclass
class BenchmarkCase:
    pattern: str
    video: MultiShotVideo  # ground-truth rendering, also carries annotations
    distractor: int | None = None  # 0-based shot index (insert-recall only)

    @property
    def captions(self):
        return self.video.captions

    @property
    def first_frame(self) -> np.ndarray:
        return self.video.shots[0].frames[0]


def _env(rng, entities, exclude=()):
    """Environment whose hue differs from every entity in the story."""
    hues = {HUE_DEG[h] for _, h in entities}
    pal = [p for p in PALETTES if p not in exclude and PALETTE_HUE[p] not in hues]
    return (pal[int(rng.integers(len(pal)))], TEXTURES[int(rng.integers(len(TEXTURES)))])


def _main_subject(rng) -> StorySpec:
    (p_desc, q_desc) = _pick_entities(rng, 2)
    env_a = _env(rng, (p_desc, q_desc))
    env_b = _env(rng, (p_desc, q_desc), exclude=(env_a[0],))
    shots = []
    for i in range(N_SHOTS):
        env = "a" if i == 0 else ("a" if rng.random() < 0.6 else "b")
        subj = ("p", "q") if (i > 0 and rng.random() < 0.25) else ("p",)
        shots.append(ShotPlan(subj, env, _action_for(rng, len(subj))))
    return StorySpec(tuple(shots), {"p": p_desc, "q": q_desc}, {"a": env_a, "b": env_b}, "main-subject")


def _insert_recall(rng) -> tuple[StorySpec, int]:
    p_desc, x_desc = _pick_entities(rng, 2)
    env_a = _env(rng, (p_desc, x_desc))
    env_d = _env(rng, (p_desc, x_desc), exclude=(env_a[0],))
    d = int(rng.integers(2, 5))
    shots = []
    for i in range(N_SHOTS):
        if i == d:
            subj = () if rng.random() < 0.5 else ("x",)
            shots.append(ShotPlan(subj, "d", "static" if not subj else _action_for(rng, 1)))
        else:
            shots.append(ShotPlan(("p",), "a", _action_for(rng, 1)))
    return StorySpec(tuple(shots), {"p": p_desc, "x": x_desc}, {"a": env_a, "d": env_d}, "insert-recall"), d


def _composable(rng) -> StorySpec:
    a_desc, b_desc = _pick_entities(rng, 2)
    env = _env(rng, (a_desc, b_desc))
    intro_b = int(rng.integers(1, 3))
    shots = []
    for i in range(N_SHOTS - 1):
        subj = ("a",) if i < intro_b else (("b",) if i == intro_b or rng.random() < 0.5 else ("a",))
        shots.append(ShotPlan(subj, "e", _action_for(rng, 1)))
    shots.append(ShotPlan(("a", "b"), "e", "compose"))
    return StorySpec(tuple(shots), {"a": a_desc, "b": b_desc}, {"e": env}, "composable")


def generate_benchmark(pattern: str, count: int, seed: int) -> list[BenchmarkCase]:
    if pattern not in PATTERNS:
        raise ConfigError(f"unknown benchmark pattern {pattern!r}; expected one of {PATTERNS}")
    if count < 1:
        raise ConfigError("count must be >= 1")
    cases = []
    for c in range(count):
        rng = np.random.default_rng([seed, PATTERNS.index(pattern), c])
        distractor = None
        if pattern == "main-subject":
            spec = _main_subject(rng)
        elif pattern == "insert-recall":
            spec, distractor = _insert_recall(rng)
        else:
            spec = _composable(rng)
        video = generate_story(spec, int(rng.integers(2**31)), video_id=f"{pattern}-{seed}-{c:03d}")
        cases.append(BenchmarkCase(pattern, video, distractor))
    return cases


def generate_benchmark_suite(count: int = 64, seed: int = 0) -> list[BenchmarkCase]:
    """``count`` cases split as evenly as possible over the three patterns."""
    base, extra = divmod(count, len(PATTERNS))
    out = []
    for i, p in enumerate(PATTERNS):
        n = base + (1 if i < extra else 0)
        if n:
            out += generate_benchmark(p, n, seed)
    return out
