import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shotmem.codecs import cosine, reference_vectors
from shotmem.world import (
    CaptionError,
    GenerationError,
    ShotPlan,
    StorySpec,
    StructuredCaption,
    Subject,
    check_referential_integrity,
    generate_benchmark,
    generate_benchmark_suite,
    generate_story,
    random_story_spec,
    render_caption_canonical,
    unrelated_video,
)
from shotmem.world.story import HUE_DEG, PALETTE_HUE, earliest_introductions
from shotmem.world.io import read_corpus, read_ppm, write_corpus, write_ppm

from conftest import make_spec


# ------------------------------------------------------------------ captions


def test_caption_roundtrip():
    cap = StructuredCaption((Subject("circle", "red"), Subject("square", "blue", "same-as-shot-1")), "forest", "grid",
                            "move-right")
    text = cap.serialize()
    assert text == "subjects=circle:red:new,square:blue:same-as-shot-1;env=forest:grid;action=move-right"
    assert StructuredCaption.parse(text) == cap


def test_empty_caption_parses():
    assert StructuredCaption.parse("") == StructuredCaption()


@pytest.mark.parametrize("bad", ["subjects=circle:red;env=;action=", "subjects=;env=forest;action=",
                                 "subjects=blob:red:new;env=;action=", "foo=1", "subjects=;env=;action=fly"])
def test_malformed_captions_rejected(bad):
    with pytest.raises(CaptionError):
        StructuredCaption.parse(bad)


def test_referential_integrity_rejects_forward_and_missing_refs():
    a = StructuredCaption((Subject("circle", "red"),), "forest", "plain", "static")
    fwd = StructuredCaption((Subject("circle", "red", "same-as-shot-2"),), "forest", "plain", "static")
    with pytest.raises(CaptionError, match="shot 2"):
        check_referential_integrity([a, fwd])
    wrong = StructuredCaption((Subject("square", "red", "same-as-shot-1"),), "forest", "plain", "static")
    with pytest.raises(CaptionError, match="shot 1"):
        check_referential_integrity([a, wrong])


def test_earliest_introductions_brute_force():
    ids = [["a"], ["b"], ["a", "b"], ["c", "b"], ["c"]]
    assert earliest_introductions(ids) == [["new"], ["new"], ["same-as-shot-1", "same-as-shot-2"],
                                           ["new", "same-as-shot-2"], ["same-as-shot-4"]]


# ------------------------------------------------------------------ stories


def test_same_entity_ids_across_static_shots():
    v = generate_story(make_spec(), seed=3)
    assert v.shots[0].annotation.entity_ids == v.shots[1].annotation.entity_ids == ("e0",)


def test_generation_is_deterministic():
    a, b = generate_story(make_spec(("move-left", "zoom-close")), 9), generate_story(make_spec(("move-left", "zoom-close")), 9)
    for s, t in zip(a.shots, b.shots):
        assert s.frames.tobytes() == t.frames.tobytes()
        assert s.annotation.labels.tobytes() == t.annotation.labels.tobytes()


def test_move_right_centroid_displacement():
    v = generate_story(make_spec(("move-right",)), seed=5)
    m = v.shots[0].annotation.mask(0)
    xs = [np.nonzero(m[k])[1].mean() for k in (0, 7)]
    assert abs((xs[1] - xs[0]) - 14.0) <= 0.5


def test_frames_in_unit_range_and_shapes(rng):
    v = generate_story(random_story_spec(rng, 3), 1)
    for s in v.shots:
        assert s.frames.shape == (8, 32, 32, 3)
        assert s.frames.min() >= 0.0 and s.frames.max() <= 1.0


def test_invalid_spec_errors():
    bad = StorySpec((ShotPlan(("zz",), "v0"),), {"e0": ("circle", "red")}, {"v0": ("forest", "plain")})
    with pytest.raises(GenerationError, match="unknown entity"):
        generate_story(bad, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_random_story_properties(seed, n):
    rng = np.random.default_rng(seed)
    spec = random_story_spec(rng, n)
    palette = spec.environments["v0"][0]
    # sprites never share the background hue
    assert all(HUE_DEG[h] != PALETTE_HUE[palette] for _, h in spec.entities.values())
    pairs = [(p.subjects, p.action) for p in spec.shots]
    assert len(set(pairs)) == len(pairs)
    for a, b in zip(spec.shots, spec.shots[1:]):
        assert set(a.subjects) & set(b.subjects)
    check_referential_integrity(generate_story(spec, seed).captions)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 3))
def test_unrelated_video_has_disjoint_content(seed, n):
    v = unrelated_video(np.random.default_rng(seed), seed, n)
    pals = [PALETTE_HUE[s.caption.palette] for s in v.shots]
    assert all(abs(a - b) == 180 for a, b in zip(pals, pals[1:]))
    hues = [sub.hue for s in v.shots for sub in s.caption.subjects]
    assert len(set(hues)) == len(hues)
    assert v.meta["unrelated"]


# ----------------------------------------------------------------- benchmark


def test_insert_recall_cases():
    cases = generate_benchmark("insert-recall", 64, 0)
    assert len(cases) == 64
    for c in cases:
        assert c.distractor in (2, 3, 4)
        envs = [s.annotation.env_id for s in c.video.shots]
        assert [i for i, e in enumerate(envs) if e != envs[0]] == [c.distractor]


def test_main_subject_shares_one_entity():
    for c in generate_benchmark("main-subject", 12, 1):
        common = set.intersection(*(set(s.annotation.entity_ids) for s in c.video.shots))
        assert common


def test_composable_final_shot():
    for c in generate_benchmark("composable", 12, 2):
        anns = [s.annotation for s in c.video.shots]
        last = anns[-1].entity_ids
        assert len(last) >= 2
        intro = [min(i for i, a in enumerate(anns[:-1]) if e in a.entity_ids) for e in last]
        assert len(set(intro)) == len(intro)


def test_benchmark_suite_split():
    suite = generate_benchmark_suite(64, 0)
    counts = {p: sum(c.pattern == p for c in suite) for p in ("main-subject", "insert-recall", "composable")}
    assert sum(counts.values()) == 64 and max(counts.values()) - min(counts.values()) <= 1


# ------------------------------------------------------------ canonical render


def test_canonical_render_matches_middle_frame():
    rng = np.random.default_rng(0)
    sims = []
    for i in range(20):
        v = generate_story(random_story_spec(rng, 2), i)
        for j, s in enumerate(v.shots):
            img = render_caption_canonical(s.caption, v.captions[:j])
            sims.append(cosine(reference_vectors(img), reference_vectors(s.frames[4])))
    assert min(sims) > 0.9


def test_canonical_render_ignores_subject_order():
    a = StructuredCaption((Subject("circle", "red"), Subject("square", "blue")), "forest", "grid", "compose")
    b = StructuredCaption((Subject("square", "blue"), Subject("circle", "red")), "forest", "grid", "compose")
    assert render_caption_canonical(a).tobytes() == render_caption_canonical(b).tobytes()


def test_environment_only_caption_renders_background():
    cap = StructuredCaption((), "forest", "plain", "static")
    img = render_caption_canonical(cap)
    assert np.all(img == img[0, 0])
    v = generate_story(StorySpec((ShotPlan((), "v0"),), {}, {"v0": ("forest", "plain")}), 0)
    assert not v.shots[0].annotation.labels.any()


def test_canonical_render_dangling_reference():
    cap = StructuredCaption((Subject("circle", "red", "same-as-shot-1"),), "forest", "plain", "static")
    with pytest.raises(CaptionError, match="shot 1"):
        render_caption_canonical(cap, [])


# ------------------------------------------------------------------------ io


def test_ppm_roundtrip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(5, 7, 3)) / 255.0
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_allclose(read_ppm(tmp_path / "a.ppm"), img, atol=1e-12)


def test_corpus_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    vids = [generate_story(random_story_spec(rng, 2), i, f"v{i}") for i in range(3)]
    vids.append(unrelated_video(rng, 9, 2, "u0"))
    write_corpus(tmp_path, vids)
    back = read_corpus(tmp_path)
    assert [v.video_id for v in back] == [v.video_id for v in vids]
    for a, b in zip(vids, back):
        assert b.captions == a.captions
        for s, t in zip(a.shots, b.shots):
            np.testing.assert_allclose(t.frames, np.round(s.frames * 255) / 255, atol=1e-12)
            assert t.annotation.entity_ids == s.annotation.entity_ids
            assert t.annotation.labels.tobytes() == s.annotation.labels.tobytes()
    assert back[-1].meta["unrelated"]
