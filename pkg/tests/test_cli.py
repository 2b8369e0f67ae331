import csv

import pytest

from shotmem import checkpoint
from shotmem.cli import main
from shotmem.config import Config

TINY = ["--set", "model_dim=8", "--set", "heads=2", "--set", "blocks=1", "--set", "num_queries=2",
        "--set", "corpus_size=18", "--set", "n_triplets=16", "--set", "total_steps=4",
        "--set", "checkpoint_every=2", "--set", "batch_size=2", "--set", "euler_steps=2"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--out", str(out)] + TINY) == 0
    return out


def test_print_defaults_round_trips(capsys):
    assert main(["config", "--print-defaults"]) == 0
    text = capsys.readouterr().out
    assert Config.loads(text) == Config()


def test_usage_errors_exit_two(capsys, tmp_path):
    assert main([]) == 2
    assert main(["train", "--budget-preset", "9frame"]) == 2
    assert main(["train"]) == 2  # no --out
    assert main(["train", "--out", str(tmp_path), "--set", "no_such_key=1"]) == 2
    assert main(["config"]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_run_is_domain_error(tmp_path, capsys):
    assert main(["eval", "--run", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1
    assert "not a training run" in capsys.readouterr().err


def test_train_twice_gives_identical_digest(run_dir, tmp_path, capsys):
    other = tmp_path / "again"
    assert main(["train", "--out", str(other)] + TINY) == 0
    assert checkpoint.digest(run_dir / "ckpt_4.bin") == checkpoint.digest(other / "ckpt_4.bin")
    assert "sha256" in capsys.readouterr().out


def test_train_resumes_without_new_steps(run_dir, capsys):
    before = (run_dir / "metrics.csv").read_bytes()
    assert main(["train", "--out", str(run_dir)] + TINY) == 0
    assert (run_dir / "metrics.csv").read_bytes() == before


def test_report_writes_metrics_and_grids(run_dir, tmp_path):
    out = tmp_path / "rep"
    assert main(["report", "--run", str(run_dir), "--out", str(out), "--count", "2"]) == 0
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert [r["video_id"] for r in rows][-1] == "mean" and len(rows) == 3
    grids = sorted(p.name for p in (out / "grids").iterdir())
    assert len(grids) == 2 and all(g.endswith(".ppm") for g in grids)
    again = tmp_path / "rep2"
    main(["report", "--run", str(run_dir), "--out", str(again), "--count", "2"])
    assert (out / "metrics.csv").read_bytes() == (again / "metrics.csv").read_bytes()


def test_trained_preset_cannot_change(run_dir, tmp_path):
    assert main(["eval", "--run", str(run_dir), "--out", str(tmp_path), "--budget-preset", "3frame"]) == 2


def test_generate_and_select_debug(run_dir, tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--run", str(run_dir), "--out", str(out), "--count", "1"]) == 0
    story = next((out / "stories").iterdir())
    assert {"generated.ppm", "reference.ppm", "selection.csv"} <= {p.name for p in story.iterdir()}
    assert main(["select-debug", "--run", str(run_dir), "--out", str(out)]) == 0
    assert "latent" in capsys.readouterr().out


def test_generate_from_caption_file(run_dir, tmp_path):
    caps = tmp_path / "caps.txt"
    caps.write_text("subjects=circle:red:new;env=forest:plain;action=static\n"
                    "subjects=circle:red:same-as-shot-1;env=forest:plain;action=move-left\n")
    out = tmp_path / "cap"
    assert main(["generate", "--run", str(run_dir), "--out", str(out), "--captions", str(caps)]) == 0
    assert (out / "story.ppm").read_bytes().startswith(b"P6")
    bad = tmp_path / "bad.txt"
    bad.write_text("subjects=blob:red:new;env=forest:plain;action=static\n")
    assert main(["generate", "--run", str(run_dir), "--out", str(out), "--captions", str(bad)]) == 1


def test_gen_data_then_curate(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--set", "corpus_size=12"]) == 0
    cur = tmp_path / "cur"
    assert main(["curate", "--out", str(cur), "--data", str(data / "corpus")]) == 0
    rows = list(csv.DictReader(open(cur / "boundaries.csv")))
    assert len(rows) == 13  # 12 stories plus one unrelated-transition video
    assert "kept" in capsys.readouterr().out


def test_gradcheck_passes(tmp_path):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "gradcheck.csv")))
    assert rows and all(float(r["relative_error"]) < 1e-6 for r in rows)
