"""Joint training of selector and generator with a decoupled warm-up."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .autograd import NumericError, backward, ops
from .config import DEFAULT, Config, ConfigError
from .dataset import TripletArrays, latent_stats
from .model import context_from_selection, generation_loss, init_model, normalize, scores
from .nn import Params
from .selection import choose_frames

log = logging.getLogger(__name__)

METRIC_FIELDS = ("step", "phase", "L_shot", "L_sel", "L_train", "source")
SOURCE_FOR_MODE = {"learned": "selector", "recent": "recent", "uniform": "uniform-spaced"}


class TrainingError(RuntimeError):
    pass


class AdamW:
    """Adam moments with bias correction and decoupled weight decay."""

    def __init__(self, params: Params, lr: float, weight_decay: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, betas[0], betas[1], eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.trainable()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.trainable()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.trainable():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data = p.data * (1.0 - self.lr * self.wd) - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {"adam.t": np.array(float(self.t))}
        for k in self.m:
            out[f"adam.m/{k}"] = self.m[k]
            out[f"adam.v/{k}"] = self.v[k]
        return out

    def load_state(self, arrays) -> None:
        self.t = int(arrays["adam.t"])
        for k in self.m:
            self.m[k] = np.array(arrays[f"adam.m/{k}"], dtype=np.float64)
            self.v[k] = np.array(arrays[f"adam.v/{k}"], dtype=np.float64)


def warmup_steps(cfg: Config) -> int:
    return int(math.floor(cfg.warmup_fraction * cfg.total_steps + 1e-9)) if cfg.decoupled else 0


def phase_of(step: int, cfg: Config) -> str:
    return "warm-up" if step < warmup_steps(cfg) else "main"


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, 0x57E9])


@dataclass
class StepReport:
    step: int
    phase: str
    L_shot: float
    L_sel: float
    L_train: float
    source: str
    batch: np.ndarray

    def row(self) -> list[str]:
        return [str(self.step), self.phase, repr(self.L_shot), repr(self.L_sel), repr(self.L_train), self.source]


def draw_batch(data: TripletArrays, step: int, cfg: Config, rng: np.random.Generator) -> np.ndarray:
    pool = np.arange(len(data))
    if phase_of(step, cfg) == "warm-up":
        pool = pool[data.inflated]
        if not len(pool):
            pool = np.arange(len(data))
    return pool[rng.integers(len(pool), size=cfg.batch_size)]


def conditioning(S: np.ndarray, step: int, cfg: Config, rng: np.random.Generator) -> tuple[np.ndarray, str]:
    """Per-item frame choices (B, n) and the source label."""
    if phase_of(step, cfg) == "warm-up":
        mode, src = "random", "uniform"
    else:
        mode, src = cfg.selection, SOURCE_FOR_MODE[cfg.selection]
    chosen = np.stack([choose_frames(s, cfg.k_sel, mode, rng) for s in S])
    return chosen, src


def training_step(data: TripletArrays, batch: np.ndarray, params: Params, opt: AdamW | None, step: int,
                  cfg: Config, rng: np.random.Generator) -> StepReport:
    """One joint update. ``opt=None`` computes losses and gradients only."""
    mem = normalize(data.history[batch], params)
    x0 = normalize(data.target[batch], params)
    cap, cmask = data.caption[batch], data.caption_mask[batch]
    t = rng.uniform(size=len(batch))
    eps = rng.normal(size=x0.shape)

    try:
        sc = scores(mem, cap, cmask, params)
        l_sel = ops.mse(sc.S, data.labels[batch])
        chosen, src = conditioning(sc.S.data, step, cfg, rng)
        ctx = context_from_selection(mem, chosen, params, cfg)
        l_shot = generation_loss(x0, eps, t, cap, cmask, ctx, params, cfg)
        total = ops.add(l_shot, ops.scale(l_sel, cfg.lambda_sel))
    except NumericError as e:
        raise TrainingError(f"non-finite loss at step {step}, batch items {batch.tolist()}: {e}") from None

    for _, p in params.items():
        p.grad = None
    backward(total)
    if opt is not None:
        opt.step()
    return StepReport(step, phase_of(step, cfg), l_shot.item(), l_sel.item(), total.item(), src, batch)


# ------------------------------------------------------------------ runs


def checkpoint_arrays(params: Params, opt: AdamW, step: int) -> dict[str, np.ndarray]:
    out = {f"param/{k}": v.data for k, v in params.items()}
    out.update(opt.state())
    out["meta.step"] = np.array(float(step))
    return out


def restore(arrays, cfg: Config) -> tuple[Params, AdamW, int]:
    params = init_model(cfg)
    params.load_arrays({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    opt = AdamW(params, cfg.lr, cfg.weight_decay)
    opt.load_state(arrays)
    return params, opt, int(arrays["meta.step"])


def latest_checkpoint(run_dir) -> Path | None:
    cks = sorted(Path(run_dir).glob("ckpt_*.bin"), key=lambda p: int(p.stem.split("_")[1]))
    return cks[-1] if cks else None


@dataclass
class RunResult:
    params: Params
    reports: list[StepReport]
    run_dir: Path | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])


def run_curriculum(cfg: Config, data: TripletArrays, run_dir=None, resume: bool = True,
                   stop_at: int | None = None) -> RunResult:
    """Train for ``cfg.total_steps`` (or until ``stop_at``), logging every
    step. With ``run_dir``, writes the config snapshot, metrics.csv and
    checkpoints, and resumes from the newest checkpoint found there."""
    if data is None or len(data) == 0:
        raise ConfigError("empty training corpus")
    cfg.validate()
    start = 0
    params = opt = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.cfg").write_text(cfg.dumps())
        ck = latest_checkpoint(run_dir) if resume else None
        if ck is not None:
            params, opt, start = restore(checkpoint.load(ck), cfg)
    if params is None:
        mean, std = latent_stats(data)
        params = init_model(cfg, cfg.seed, mean, std)
        opt = AdamW(params, cfg.lr, cfg.weight_decay)

    end = cfg.total_steps if stop_at is None else min(stop_at, cfg.total_steps)
    metrics_path = None if run_dir is None else run_dir / "metrics.csv"
    if metrics_path is not None:
        _truncate_metrics(metrics_path, start)
    reports = []
    fh = None if metrics_path is None else open(metrics_path, "a", newline="")
    try:
        writer = None if fh is None else csv.writer(fh, lineterminator="\n")
        if writer is not None and start == 0:
            writer.writerow(METRIC_FIELDS)
        for step in range(start, end):
            rng = step_rng(cfg.seed, step)
            batch = draw_batch(data, step, cfg, rng)
            rep = training_step(data, batch, params, opt, step, cfg, rng)
            reports.append(rep)
            if writer is not None:
                writer.writerow(rep.row())
            done = step + 1
            if run_dir is not None and (done % cfg.checkpoint_every == 0 or done == end):
                fh.flush()
                checkpoint.save(run_dir / f"ckpt_{done}.bin", checkpoint_arrays(params, opt, done))
                (run_dir / "rng_state.txt").write_text(f"seed={cfg.seed}\nnext_step={done}\n")
    finally:
        if fh is not None:
            fh.close()
    return RunResult(params, reports, run_dir)


def _truncate_metrics(path: Path, start: int) -> None:
    """Drop logged rows at or after ``start`` so a resumed run appends
    cleanly."""
    if not path.exists():
        return
    if start == 0:
        path.unlink()
        return
    lines = path.read_text().splitlines()
    keep = [lines[0]] + [ln for ln in lines[1:] if int(ln.split(",")[0]) < start]
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(keep) + "\n")
    os.replace(tmp, path)


def read_metrics(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_params(path, cfg: Config = DEFAULT) -> Params:
    arrays = checkpoint.load(path)
    params = init_model(cfg)
    params.load_arrays({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    return params
