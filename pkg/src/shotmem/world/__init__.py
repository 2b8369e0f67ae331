from .benchmark import PATTERNS, BenchmarkCase, generate_benchmark, generate_benchmark_suite
from .caption import CaptionError, StructuredCaption, Subject, check_referential_integrity
from .story import (
    GenerationError,
    MultiShotVideo,
    Shot,
    ShotAnnotation,
    ShotPlan,
    StorySpec,
    generate_story,
    random_story_spec,
    render_caption_canonical,
    unrelated_video,
)

__all__ = [
    "PATTERNS",
    "BenchmarkCase",
    "generate_benchmark",
    "generate_benchmark_suite",
    "CaptionError",
    "StructuredCaption",
    "Subject",
    "check_referential_integrity",
    "GenerationError",
    "MultiShotVideo",
    "Shot",
    "ShotAnnotation",
    "ShotPlan",
    "StorySpec",
    "generate_story",
    "random_story_spec",
    "render_caption_canonical",
    "unrelated_video",
]
