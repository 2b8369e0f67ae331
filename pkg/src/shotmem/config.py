"""Flat key=value run configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


BUDGET_PRESETS = {
    # name: (k_sel, kernels)
    "1frame": (6, (2, 4)),
    "2frame": (8, (2,)),
    "3frame": (12, (2,)),
}

SELECTION_MODES = ("learned", "uniform", "recent")
SAMPLING_MODES = ("t2msv", "i2msv")


@dataclass(frozen=True)
class Config:
    # codec
    height: int = 32
    width: int = 32
    channels: int = 3
    frames_per_shot: int = 8
    f_t: int = 2
    f_s: int = 8
    latent_dim: int = 8
    codec_seed: int = 0
    caption_tokens: int = 16
    caption_dim: int = 16
    # selector / conditioner
    model_dim: int = 32
    num_queries: int = 4
    k_sel: int = 6
    kernels: tuple[int, ...] = (2, 4)
    budget_preset: str = "1frame"
    selection: str = "learned"
    # denoiser
    heads: int = 4
    blocks: int = 2
    ff_mult: int = 4
    # trainer
    total_steps: int = 2000
    warmup_fraction: float = 0.3
    decoupled: bool = True
    lambda_sel: float = 0.1
    lr: float = 5e-4
    weight_decay: float = 0.01
    batch_size: int = 8
    n_triplets: int = 512
    two_shot_ratio: int = 5
    checkpoint_every: int = 500
    # sampler
    euler_steps: int = 20
    mode: str = "t2msv"
    # curation
    tau_low: float = 0.05
    tau_high: float = 0.9999
    blocklist: tuple[str, ...] = ("gore", "logo", "watermark")
    # benchmark / data
    benchmark_count: int = 64
    corpus_size: int = 240
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.height % self.f_s or self.width % self.f_s:
            raise ConfigError("frame size must be divisible by f_s")
        if self.frames_per_shot % self.f_t:
            raise ConfigError("frames_per_shot must be divisible by f_t")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1]")
        if self.lambda_sel < 0:
            raise ConfigError("lambda_sel must be >= 0")
        if self.tau_low >= self.tau_high:
            raise ConfigError("tau_low must be < tau_high")
        if self.euler_steps < 1:
            raise ConfigError("euler_steps must be >= 1")
        if self.k_sel < 1:
            raise ConfigError("k_sel must be >= 1")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"selection must be one of {SELECTION_MODES}")
        if self.mode not in SAMPLING_MODES:
            raise ConfigError(f"mode must be one of {SAMPLING_MODES}")
        if self.budget_preset not in BUDGET_PRESETS:
            raise ConfigError(f"budget_preset must be one of {tuple(BUDGET_PRESETS)}")
        if self.model_dim % self.heads:
            raise ConfigError("model_dim must be divisible by heads")
        grid = (self.height // self.f_s, self.width // self.f_s)
        for k in self.kernels:
            if grid[0] % k or grid[1] % k:
                raise ConfigError(f"kernel {k} does not tile the {grid[0]}x{grid[1]} latent grid")
        if list(self.kernels) != sorted(set(self.kernels)):
            raise ConfigError("kernels must be strictly increasing")

    # derived sizes
    @property
    def latent_frames(self) -> int:
        return self.frames_per_shot // self.f_t

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // self.f_s, self.width // self.f_s

    @property
    def n_spatial(self) -> int:
        return self.grid[0] * self.grid[1]

    def replace(self, **kw) -> "Config":
        return dataclasses.replace(self, **kw)

    def with_preset(self, name: str) -> "Config":
        if name not in BUDGET_PRESETS:
            raise ConfigError(f"unknown budget preset {name!r}")
        k_sel, kernels = BUDGET_PRESETS[name]
        return self.replace(budget_preset=name, k_sel=k_sel, kernels=kernels)

    # text form
    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, base: "Config | None" = None) -> "Config":
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        updates = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            updates[key] = _parse(value, getattr(base, key), key)
        return dataclasses.replace(base, **updates)

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse(value: str, default, key: str):
    try:
        if isinstance(default, bool):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(value)
            return value.lower() in ("true", "1")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = [s.strip() for s in value.split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(s) for s in items)
            return tuple(items)
        return value
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


DEFAULT = Config()
