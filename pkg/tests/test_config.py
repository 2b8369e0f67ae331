import pytest
from hypothesis import given, settings, strategies as st

from shotmem.config import BUDGET_PRESETS, DEFAULT, Config, ConfigError


def test_text_round_trip():
    cfg = DEFAULT.replace(lr=1.5e-4, decoupled=False, blocklist=("a", "b")).with_preset("3frame")
    assert Config.loads(cfg.dumps()) == cfg


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1.0, allow_nan=False), st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_float_and_int_fields_round_trip_exactly(lr, seed, frac):
    cfg = DEFAULT.replace(lr=lr, seed=seed, warmup_fraction=frac)
    assert Config.loads(cfg.dumps()) == cfg


def test_comments_and_blank_lines_ignored():
    cfg = Config.loads("# header\n\nlr = 0.001  # inline\nselection=recent\n")
    assert cfg.lr == 0.001 and cfg.selection == "recent"


@pytest.mark.parametrize("text, msg", [
    ("nonsense", "key=value"),
    ("colour=3", "unknown key"),
    ("blocks=two", "bad value"),
    ("decoupled=maybe", "bad value"),
])
def test_malformed_text(text, msg):
    with pytest.raises(ConfigError, match=msg):
        Config.loads(text)


@pytest.mark.parametrize("kw", [
    dict(warmup_fraction=1.5), dict(lambda_sel=-0.1), dict(tau_low=0.9, tau_high=0.5), dict(euler_steps=0),
    dict(k_sel=0), dict(selection="random"), dict(mode="v2v"), dict(model_dim=30, heads=4),
    dict(kernels=(3,)), dict(kernels=(4, 2)), dict(f_s=7), dict(budget_preset="5frame"),
])
def test_invalid_values_rejected(kw):
    with pytest.raises(ConfigError):
        DEFAULT.replace(**kw)


def test_presets_set_budget_fields():
    for name, (k_sel, kernels) in BUDGET_PRESETS.items():
        cfg = DEFAULT.with_preset(name)
        assert (cfg.budget_preset, cfg.k_sel, cfg.kernels) == (name, k_sel, kernels)
    with pytest.raises(ConfigError):
        DEFAULT.with_preset("nope")


def test_derived_sizes():
    assert DEFAULT.latent_frames == 4 and DEFAULT.grid == (4, 4) and DEFAULT.n_spatial == 16
