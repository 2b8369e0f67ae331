import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shotmem.codecs import (
    cosine,
    decode_frames,
    decode_latent,
    embed_caption,
    embed_frame_reference,
    encode_frames,
    encode_shot,
    projection,
)
from shotmem.config import DEFAULT, ConfigError
from shotmem.world import StructuredCaption, Subject, generate_story

from conftest import make_spec


def test_projection_has_orthonormal_columns():
    w = projection(2, 8, 3, 8, 0)
    assert w.shape == (384, 8)
    np.testing.assert_allclose(w.T @ w, np.eye(8), atol=1e-12)


def test_zero_shot_encodes_to_zero():
    z = encode_frames(np.zeros((8, 32, 32, 3)))
    assert z.shape == (4, 4, 4, 8)
    assert not z.any()


def test_decode_shape_and_zero():
    x = decode_latent(np.zeros((4, 4, 4, 8)))
    assert x.shape == (8, 32, 32, 3)
    assert not x.any()


def test_encode_shot_uses_frames():
    shot = generate_story(make_spec(), 0).shots[0]
    np.testing.assert_array_equal(encode_shot(shot), encode_frames(shot.frames))


def test_round_trip_from_pixels(rng):
    x = rng.random((8, 32, 32, 3))
    z = encode_frames(x)
    np.testing.assert_allclose(encode_frames(decode_frames(z, clamp=False)), z, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_encode_decode_identity_on_latents(seed):
    z = np.random.default_rng(seed).normal(size=(4, 4, 4, 8))
    np.testing.assert_allclose(encode_frames(decode_frames(z, clamp=False)), z, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_encoder_is_linear(seed, a, b):
    r = np.random.default_rng(seed)
    x, y = r.random((2, 8, 32, 32, 3))
    np.testing.assert_allclose(encode_frames(a * x + b * y), a * encode_frames(x) + b * encode_frames(y), atol=1e-9)


def test_decode_clamps_only_when_rendering(rng):
    z = rng.normal(size=(4, 4, 4, 8)) * 5
    raw = decode_frames(z, clamp=False)
    assert raw.min() < 0 or raw.max() > 1
    out = decode_frames(z)
    assert out.min() >= 0 and out.max() <= 1


def test_codec_seed_changes_projection(rng):
    x = rng.random((8, 32, 32, 3))
    assert not np.allclose(encode_frames(x, codec_seed=0), encode_frames(x, codec_seed=1))


@pytest.mark.parametrize("shape", [(8, 30, 32, 3), (7, 32, 32, 3), (8, 32, 32, 4)])
def test_indivisible_dims_rejected(shape):
    with pytest.raises(ConfigError):
        encode_frames(np.zeros(shape))


# ------------------------------------------------------------------ captions

CAP = StructuredCaption((Subject("circle", "red"), Subject("square", "blue")), "forest", "grid", "move-right")


def test_caption_embedding_deterministic_and_unit():
    a, b = embed_caption(CAP), embed_caption(CAP)
    assert a.tokens.tobytes() == b.tokens.tobytes()
    n = a.valid_len
    np.testing.assert_allclose(np.linalg.norm(a.tokens[:n], axis=1), 1.0, atol=1e-9)
    assert not a.tokens[n:].any()
    assert a.mask.sum() == n


def test_empty_caption_embeds_to_zero():
    e = embed_caption(None)
    assert e.valid_len == 0 and not e.tokens.any()
    assert embed_caption("").valid_len == 0


def test_one_token_change_differs_in_one_row():
    other = StructuredCaption((Subject("circle", "red"), Subject("square", "green")), "forest", "grid", "move-right")
    ta, tb = CAP.tokens(), other.tokens()
    assert len(ta) == len(tb)
    diff_tokens = [i for i, (x, y) in enumerate(zip(ta, tb)) if x != y]
    a, b = embed_caption(CAP).tokens, embed_caption(other).tokens
    diff_rows = [i for i in range(len(a)) if not np.array_equal(a[i], b[i])]
    assert diff_rows == diff_tokens and len(diff_rows) == 1


def test_long_caption_truncates_with_warning():
    cfg = DEFAULT.replace(caption_tokens=3)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        e = embed_caption(CAP, cfg)
    assert e.truncated and e.valid_len == 3
    assert any("truncated" in str(x.message) for x in w)


# ------------------------------------------------------------ reference embedder


def test_reference_embedding_unit_and_identical(rng):
    f = rng.random((32, 32, 3))
    e = embed_frame_reference(f)
    assert e.vec.shape == (192,)
    assert abs(np.linalg.norm(e.vec) - 1) < 1e-9
    assert cosine(e.vec, embed_frame_reference(f.copy()).vec) == pytest.approx(1.0, abs=1e-12)


def test_reference_embedding_shuffle_within_cells(rng):
    f = rng.random((32, 32, 3))
    g = f.copy()
    for by in range(8):
        for bx in range(8):
            cell = g[4 * by:4 * by + 4, 4 * bx:4 * bx + 4].reshape(16, 3)
            g[4 * by:4 * by + 4, 4 * bx:4 * bx + 4] = cell[rng.permutation(16)].reshape(4, 4, 3)
    np.testing.assert_allclose(embed_frame_reference(g).vec, embed_frame_reference(f).vec, atol=1e-12)


def test_zero_frame_falls_back_to_e1():
    e = embed_frame_reference(np.zeros((32, 32, 3)))
    assert e.fallback
    assert e.vec[0] == 1.0 and np.count_nonzero(e.vec) == 1


def test_colour_change_costs_more_than_shift():
    red = generate_story(make_spec(hue="red", env=("desert", "plain")), 0).shots[0].frames[0]
    blue = generate_story(make_spec(hue="blue", env=("desert", "plain")), 0).shots[0].frames[0]
    shifted = np.roll(red, 2, axis=1)
    ref = embed_frame_reference
    assert cosine(ref(red).vec, ref(blue).vec) < cosine(ref(red).vec, ref(shifted).vec)
