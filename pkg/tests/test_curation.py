import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shotmem.config import DEFAULT, ConfigError
from shotmem.curation import (
    boundary_f1,
    detect_shot_boundaries,
    filter_corpus,
    filter_video,
    rewrite_referential,
)
from shotmem.world import (
    CaptionError,
    MultiShotVideo,
    Shot,
    StructuredCaption,
    Subject,
    generate_story,
    random_story_spec,
    unrelated_video,
)

from conftest import make_spec


def _concat(video):
    return np.concatenate([s.frames for s in video.shots])


# ------------------------------------------------------------------ boundaries


def test_constant_video_has_no_cuts():
    b = detect_shot_boundaries(np.full((16, 32, 32, 3), 0.4))
    assert b.cuts == [] and b.too_few_shots


def test_two_environments_give_one_cut():
    a = generate_story(make_spec(env=("lagoon", "plain")), 0).shots[0].frames
    b = generate_story(make_spec(env=("desert", "grid")), 1).shots[0].frames
    bs = detect_shot_boundaries(np.concatenate([a, b]))
    assert bs.cuts == [8] and not bs.too_few_shots
    assert [len(s) for s in bs.split(np.concatenate([a, b]))] == [8, 8]


def test_planted_cuts_f1():
    rng = np.random.default_rng(0)
    scores = []
    for i in range(100):
        v = unrelated_video(rng, i, 2)
        scores.append(boundary_f1(detect_shot_boundaries(_concat(v)).cuts, [8]))
    assert np.mean(scores) >= 0.95


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 6))
def test_prepending_constant_frames_shifts_cuts(seed, k):
    frames = _concat(unrelated_video(np.random.default_rng(seed), seed, 2))
    base = detect_shot_boundaries(frames).cuts
    padded = np.concatenate([np.repeat(frames[:1], k, axis=0), frames])
    assert detect_shot_boundaries(padded).cuts == [c + k for c in base]


def test_boundary_f1_values():
    assert boundary_f1([], []) == 1.0
    assert boundary_f1([8], [8]) == 1.0
    assert boundary_f1([3], [8]) == 0.0
    assert boundary_f1([8, 12], [8]) == pytest.approx(2 / 3)


def test_single_frame_rejected():
    with pytest.raises(ValueError):
        detect_shot_boundaries(np.zeros((1, 32, 32, 3)))


# ------------------------------------------------------------------ captions


def _cap(shape, hue, ref="new"):
    return StructuredCaption((Subject(shape, hue, ref),), "forest", "plain", "static")


def test_rewrite_points_at_first_introduction():
    caps = [_cap("circle", "red"), _cap("square", "blue"), _cap("circle", "red")]
    out = rewrite_referential(caps, [["a"], ["b"], ["a"]])
    assert out[2].subjects[0].ref == "same-as-shot-1"
    assert out[:2] == caps[:2]


def test_rewrite_brute_force_scan():
    caps = [_cap("circle", "red"), _cap("square", "blue"), _cap("square", "blue"), _cap("square", "blue")]
    ids = [["x"], ["y"], ["y"], ["y"]]
    out = rewrite_referential(caps, ids)
    assert [c.subjects[0].ref for c in out] == ["new", "new", "same-as-shot-2", "same-as-shot-2"]


def test_rewrite_idempotent_and_noop_on_distinct():
    caps = [_cap("circle", "red"), _cap("square", "blue")]
    assert rewrite_referential(caps, [["a"], ["b"]]) == caps
    once = rewrite_referential(caps + [_cap("circle", "red")], [["a"], ["b"], ["a"]])
    assert rewrite_referential(once, [["a"], ["b"], ["a"]]) == once


def test_rewrite_reports_unmatched_entities():
    with pytest.raises(CaptionError, match="unmatched"):
        rewrite_referential([_cap("circle", "red"), _cap("square", "red")], [["a"], ["a"]])
    with pytest.raises(CaptionError):
        rewrite_referential([_cap("circle", "red")], [["a"], ["b"]])


# ------------------------------------------------------------------ filtering


def test_identical_shots_are_near_duplicates():
    v = generate_story(make_spec(), 0)
    dup = MultiShotVideo([v.shots[0], Shot(v.shots[0].frames.copy(), v.shots[1].caption)], v.spec, 0, "dup")
    verdict = filter_video(dup)
    assert (verdict.kept, verdict.reason) == (False, "near-duplicate")
    assert verdict.score == pytest.approx(1.0)


def test_keyword_stage_runs_first():
    v = generate_story(make_spec(), 0)
    shots = [Shot(s.frames, s.caption, s.annotation) for s in v.shots]
    # an unrelated and duplicated video still reports the keyword reason
    shots[1] = Shot(shots[0].frames, shots[1].caption)
    bad = MultiShotVideo(shots, v.spec, 0, "kw")
    cfg = DEFAULT.replace(blocklist=("forest", "lagoon"))
    assert filter_video(bad, cfg).reason == "keyword"


def test_too_few_shots():
    v = generate_story(make_spec(), 0)
    assert filter_video(MultiShotVideo(v.shots[:1], v.spec, 0, "one")).reason == "too-few-shots"


def test_mixed_corpus_split_exactly():
    rng = np.random.default_rng(11)
    related = [generate_story(random_story_spec(rng, int(rng.integers(2, 4))), i, f"r{i}") for i in range(50)]
    unrelated = [unrelated_video(rng, i, int(rng.integers(2, 4)), f"u{i}") for i in range(50)]
    rep = filter_corpus(related + unrelated)
    by = rep.by_id()
    assert all(by[v.video_id].kept for v in related)
    assert all(by[v.video_id].reason == "irrelevant-transition" for v in unrelated)
    assert rep.counts()["kept"] == 50


def test_threshold_order_validated():
    with pytest.raises(ConfigError):
        filter_corpus([], tau_low=0.5, tau_high=0.4)


def test_report_csv(tmp_path):
    vids = [generate_story(make_spec(), 0, "a")]
    rep = filter_corpus(vids)
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "video_id,verdict,reason,score"
    assert lines[1].startswith("a,")
