"""Command-line entry point: data generation, curation, training, sampling,
evaluation and debugging, all writing under one --out directory."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .autograd import TensorError
from .config import BUDGET_PRESETS, SAMPLING_MODES, SELECTION_MODES, Config, ConfigError
from .curation import boundary_f1, detect_shot_boundaries
from .dataset import build_triplets, curate, generate_corpus, pack_triplets, training_pool
from .evalsuite import EvalError, evaluate_video, write_report_csv
from .gradsuite import TOLERANCE, run_suite
from .sampler import SamplingError, generate_story_video
from .selection import SelectionError
from .trainer import TrainingError, latest_checkpoint, load_params, run_curriculum
from .world import PATTERNS, CaptionError, GenerationError, generate_benchmark, generate_benchmark_suite
from .world.io import CorpusError, read_manifest, read_video, write_corpus, write_ppm

DOMAIN_ERRORS = (CaptionError, GenerationError, CorpusError, SelectionError, SamplingError, TrainingError,
                 EvalError, TensorError, checkpoint.CheckpointError, FileNotFoundError)


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def build_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if args.set:
        cfg = Config.loads("\n".join(args.set), base=cfg)
    if args.budget_preset:
        cfg = cfg.with_preset(args.budget_preset)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.selection:
        over["selection"] = args.selection
    if args.mode:
        over["mode"] = args.mode
    return cfg.replace(**over) if over else cfg


def run_config(run: Path, args) -> Config:
    """Config of a training run, with sampling-time flag overrides."""
    path = run / "config.cfg"
    if not path.exists():
        raise FileNotFoundError(f"{path}: not a training run directory")
    cfg = Config.load(path)
    if args.set:
        cfg = Config.loads("\n".join(args.set), base=cfg)
    if args.budget_preset and args.budget_preset != cfg.budget_preset:
        raise UsageError(f"run was trained with budget preset {cfg.budget_preset!r}")
    over = {k: v for k, v in (("selection", args.selection), ("mode", args.mode), ("seed", args.seed)) if v is not None}
    return cfg.replace(**over) if over else cfg


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(out: Path, cfg: Config) -> None:
    (out / "config.cfg").write_text(cfg.dumps())


def _params(run: Path, cfg: Config):
    ck = latest_checkpoint(run)
    if ck is None:
        raise FileNotFoundError(f"{run}: no checkpoint found")
    return load_params(ck, cfg), ck


# ------------------------------------------------------------------ images


def story_grid(video, gap: int = 1) -> np.ndarray:
    """Shots as rows, frames as columns, separated by white lines."""
    rows = []
    for s in video.shots:
        cells = []
        for f in s.frames:
            cells += [f, np.ones((f.shape[0], gap, f.shape[2]))]
        rows += [np.concatenate(cells[:-1], axis=1)]
        rows += [np.ones((gap, rows[-1].shape[1], rows[-1].shape[2]))]
    return np.clip(np.concatenate(rows[:-1], axis=0), 0.0, 1.0)


def _cases(args, cfg):
    if args.pattern == "all":
        return generate_benchmark_suite(args.count or cfg.benchmark_count, cfg.seed)
    return generate_benchmark(args.pattern, args.count or cfg.benchmark_count, cfg.seed)


def _generate(cases, params, cfg):
    for c in cases:
        first = c.first_frame if cfg.mode == "i2msv" else None
        yield c, generate_story_video(c.captions, params, cfg, first, cfg.seed, video_id=c.video.video_id)


def _write_traces(path: Path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("shot", "memory_shot", "memory_latent", "score", "chosen"))
        for tr in traces:
            if tr is None:
                continue
            for s, k, score, chosen in tr.rows():
                w.writerow((tr.shot, s, k, repr(score), int(chosen)))


# ------------------------------------------------------------- subcommands


def cmd_gen_data(args) -> int:
    cfg, out = build_config(args), _out(args)
    _snapshot(out, cfg)
    videos = generate_corpus(cfg)
    write_corpus(out / "corpus", videos)
    print(f"wrote {len(videos)} videos to {out / 'corpus'}")
    return 0


def cmd_curate(args) -> int:
    cfg, out = build_config(args), _out(args)
    if not args.data:
        raise UsageError("--data is required")
    _snapshot(out, cfg)
    root = Path(args.data)
    videos, f1s = [], []
    with open(out / "boundaries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("video_id", "detected_starts", "stored_starts", "f1"))
        for rec in read_manifest(root / "manifest.txt"):
            stored = [int(x) for x in rec["shot_starts"].split(",")]
            raw = read_video(root, rec, [0])
            det = detect_shot_boundaries(raw.shots[0].frames).shot_starts()
            f1 = boundary_f1(det[1:], stored[1:])
            f1s.append(f1)
            w.writerow((rec["video"], ",".join(map(str, det)), ",".join(map(str, stored)), repr(f1)))
            videos.append(read_video(root, rec, det))
    kept, report = curate(videos, cfg)
    report.write_csv(out / "curation.csv")
    (out / "kept.txt").write_text("".join(v.video_id + "\n" for v in kept))
    print(f"boundary F1 {np.mean(f1s):.4f}; kept {len(kept)} of {len(videos)}: {report.counts()}")
    return 0


def cmd_train(args) -> int:
    cfg, out = build_config(args), _out(args)
    if args.data:
        kept, _ = curate([read_video(args.data, r) for r in read_manifest(Path(args.data) / "manifest.txt")], cfg)
        data = pack_triplets(build_triplets(kept, cfg.n_triplets, cfg.seed), cfg)
    else:
        data = training_pool(cfg)
    res = run_curriculum(cfg, data, run_dir=out, resume=not args.fresh)
    ck = latest_checkpoint(out)
    if res.reports:
        last = res.reports[-1]
        print(f"step {last.step + 1}: L_shot={last.L_shot:.5f} L_sel={last.L_sel:.5f} L_train={last.L_train:.5f}")
    print(f"checkpoint {ck} sha256 {checkpoint.digest(ck)}")
    return 0


def cmd_generate(args) -> int:
    run, out = Path(args.run), _out(args)
    cfg = run_config(run, args)
    params, _ = _params(run, cfg)
    _snapshot(out, cfg)
    if args.captions:
        caps = [ln for ln in Path(args.captions).read_text().splitlines() if ln.strip()]
        if cfg.mode == "i2msv":
            raise UsageError("i2msv needs a benchmark case for its first image; use --pattern")
        story = generate_story_video(caps, params, cfg, None, cfg.seed)
        write_ppm(out / "story.ppm", story_grid(story.video))
        _write_traces(out / "selection.csv", story.traces)
        print(f"wrote {out / 'story.ppm'}")
        return 0
    for case, story in _generate(_cases(args, cfg), params, cfg):
        d = out / "stories" / case.video.video_id
        d.mkdir(parents=True, exist_ok=True)
        write_ppm(d / "generated.ppm", story_grid(story.video))
        write_ppm(d / "reference.ppm", story_grid(case.video))
        _write_traces(d / "selection.csv", story.traces)
    print(f"wrote stories under {out / 'stories'}")
    return 0


def _evaluate(args, write_images: bool) -> int:
    run, out = Path(args.run), _out(args)
    cfg = run_config(run, args)
    params, _ = _params(run, cfg)
    _snapshot(out, cfg)
    ids, reports = [], []
    for case, story in _generate(_cases(args, cfg), params, cfg):
        anns = [s.annotation for s in case.video.shots]
        ids.append(case.video.video_id)
        reports.append(evaluate_video(story.video, anns, case.captions))
        if write_images:
            (out / "grids").mkdir(exist_ok=True)
            write_ppm(out / "grids" / f"{case.video.video_id}.ppm", story_grid(story.video))
    write_report_csv(out / "metrics.csv", ids, reports)
    with open(out / "metrics.csv") as fh:
        print(fh.read().splitlines()[-1])
    return 0


def cmd_eval(args) -> int:
    return _evaluate(args, write_images=False)


def cmd_report(args) -> int:
    return _evaluate(args, write_images=True)


def cmd_select_debug(args) -> int:
    run, out = Path(args.run), _out(args)
    cfg = run_config(run, args)
    params, _ = _params(run, cfg)
    cases = generate_benchmark(args.pattern if args.pattern != "all" else "insert-recall", args.case + 1, cfg.seed)
    case = cases[args.case]
    first = case.first_frame if cfg.mode == "i2msv" else None
    story = generate_story_video(case.captions, params, cfg, first, cfg.seed)
    _write_traces(out / "selection.csv", story.traces)
    for tr in story.traces:
        if tr is None:
            continue
        print(f"shot {tr.shot + 1}: {case.captions[tr.shot]}")
        for s, k, score, chosen in tr.rows():
            print(f"  shot {s + 1} latent {k}: {score:+.4f}{'  *' if chosen else ''}")
    return 0


def cmd_gradcheck(args) -> int:
    errors = run_suite(args.seed or 0)
    worst = max(errors, key=errors.get)
    print(f"checked {len(errors)} gradients; max relative error {errors[worst]:.3e} ({worst})")
    if args.out:
        out = _out(args)
        with open(out / "gradcheck.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("check", "relative_error"))
            for k, v in errors.items():
                w.writerow((k, repr(v)))
    return 0 if errors[worst] < TOLERANCE else 1


def cmd_config(args) -> int:
    if not args.print_defaults:
        raise UsageError("config: nothing to do (try --print-defaults)")
    sys.stdout.write(Config().dumps())
    return 0


# ------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget-preset", choices=tuple(BUDGET_PRESETS))
    p.add_argument("--selection", choices=SELECTION_MODES)
    p.add_argument("--mode", choices=SAMPLING_MODES)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def _bench(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--pattern", choices=PATTERNS + ("all",), default="insert-recall")
    p.add_argument("--count", type=int, help="number of benchmark cases (default: benchmark_count)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shotmem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic multi-shot corpus")
    _common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("curate", help="detect cuts, rewrite captions and filter a corpus")
    _common(p)
    p.add_argument("--data", help="corpus directory written by gen-data")
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("train", help="run the training curriculum")
    _common(p)
    p.add_argument("--data", help="corpus directory (default: synthesise one from the config)")
    p.add_argument("--fresh", action="store_true", help="ignore existing checkpoints in --out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="sample multi-shot stories from a trained run")
    _common(p)
    _bench(p)
    p.add_argument("--captions", help="file with one caption per line instead of benchmark cases")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("eval", help="generate benchmark stories and score them")
    _common(p)
    _bench(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="metric CSV plus PPM image grids")
    _common(p)
    _bench(p)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("select-debug", help="print frame relevance scores for one benchmark case")
    _common(p)
    _bench(p)
    p.add_argument("--case", type=int, default=0)
    p.set_defaults(fn=cmd_select_debug)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("config", help="show configuration")
    p.add_argument("--print-defaults", action="store_true")
    p.set_defaults(fn=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        print(f"shotmem {args.command}: error: {e}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as e:
        print(f"shotmem {args.command}: {e}", file=sys.stderr)
        return 1
