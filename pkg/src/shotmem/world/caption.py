"""Structured shot captions.

Text form::

    subjects=circle:red:new,square:blue:same-as-shot-1;env=forest:grid;action=move-right

Shot numbers inside ``same-as-shot-<j>`` are 1-based, as a reader would
count shots.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

SHAPES = ("circle", "square", "triangle")
HUES = ("red", "green", "blue", "yellow", "magenta", "cyan")
PALETTES = ("sunset", "desert", "forest", "lagoon", "ocean", "dusk")
TEXTURES = ("plain", "grid", "stripes")
ACTIONS = ("static", "move-left", "move-right", "move-up", "move-down", "zoom-close", "zoom-wide", "compose")

_REF = re.compile(r"^same-as-shot-(\d+)$")


class CaptionError(ValueError):
    pass


@dataclass(frozen=True)
class Subject:
    shape: str
    hue: str
    ref: str = "new"

    @property
    def descriptor(self) -> tuple[str, str]:
        return (self.shape, self.hue)

    @property
    def ref_shot(self) -> int | None:
        """1-based shot number referenced, or None for a first mention."""
        m = _REF.match(self.ref)
        return int(m.group(1)) if m else None


@dataclass(frozen=True)
class StructuredCaption:
    subjects: tuple[Subject, ...] = ()
    palette: str = ""
    texture: str = ""
    action: str = ""

    def __post_init__(self):
        for s in self.subjects:
            if s.shape not in SHAPES:
                raise CaptionError(f"unknown shape {s.shape!r}")
            if s.hue not in HUES:
                raise CaptionError(f"unknown hue {s.hue!r}")
            if s.ref != "new" and not _REF.match(s.ref):
                raise CaptionError(f"bad reference flag {s.ref!r}")
        if self.palette and self.palette not in PALETTES:
            raise CaptionError(f"unknown palette {self.palette!r}")
        if self.texture and self.texture not in TEXTURES:
            raise CaptionError(f"unknown texture {self.texture!r}")
        if self.action and self.action not in ACTIONS:
            raise CaptionError(f"unknown action {self.action!r}")

    def serialize(self) -> str:
        subj = ",".join(f"{s.shape}:{s.hue}:{s.ref}" for s in self.subjects)
        env = f"{self.palette}:{self.texture}" if (self.palette or self.texture) else ""
        return f"subjects={subj};env={env};action={self.action}"

    __str__ = serialize

    @classmethod
    def parse(cls, text: str) -> "StructuredCaption":
        text = text.strip()
        if not text:
            return cls()
        parts = {}
        for chunk in text.split(";"):
            if "=" not in chunk:
                raise CaptionError(f"malformed field {chunk!r}")
            k, v = chunk.split("=", 1)
            parts[k.strip()] = v.strip()
        if set(parts) != {"subjects", "env", "action"}:
            raise CaptionError(f"expected fields subjects, env, action; got {sorted(parts)}")
        subjects = []
        if parts["subjects"]:
            for item in parts["subjects"].split(","):
                bits = item.split(":")
                if len(bits) != 3:
                    raise CaptionError(f"malformed subject {item!r}")
                subjects.append(Subject(*bits))
        palette = texture = ""
        if parts["env"]:
            bits = parts["env"].split(":")
            if len(bits) != 2:
                raise CaptionError(f"malformed env {parts['env']!r}")
            palette, texture = bits
        return cls(tuple(subjects), palette, texture, parts["action"])

    def tokens(self) -> list[str]:
        """Field values in order; the key names carry no information."""
        out = []
        for s in self.subjects:
            out += [s.shape, s.hue, s.ref]
        out += [t for t in (self.palette, self.texture, self.action) if t]
        return out

    def with_refs(self, refs: list[str]) -> "StructuredCaption":
        if len(refs) != len(self.subjects):
            raise CaptionError("one reference flag per subject required")
        return replace(self, subjects=tuple(replace(s, ref=r) for s, r in zip(self.subjects, refs)))

    def without_refs(self) -> "StructuredCaption":
        return self.with_refs(["new"] * len(self.subjects))


def check_referential_integrity(captions: list[StructuredCaption]) -> None:
    """Every same-as flag must point to an earlier shot that shows the same
    descriptor."""
    for i, cap in enumerate(captions, 1):
        for s in cap.subjects:
            j = s.ref_shot
            if j is None:
                continue
            if not 1 <= j < i:
                raise CaptionError(f"shot {i}: reference to shot {j} is not an earlier shot")
            if s.descriptor not in {t.descriptor for t in captions[j - 1].subjects}:
                raise CaptionError(f"shot {i}: shot {j} has no {s.shape} {s.hue}")
