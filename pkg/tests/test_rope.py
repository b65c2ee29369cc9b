import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionrope.flow import DisplacementGrid
from motionrope.rope import RopeConfig, build_default_rope, build_motion_rope, freq_spectrum, rope_1d

COS1, SIN1 = 0.5403023058681398, 0.8414709848078965
COS_HALF, SIN_HALF = 0.8775825618903728, 0.479425538604203


def test_freq_examples():
    np.testing.assert_allclose(freq_spectrum(4, 10000), [1.0, 0.01], rtol=1e-15)
    assert freq_spectrum(2, 3.7).tolist() == [1.0]
    np.testing.assert_allclose(
        freq_spectrum(6, 10000), [1.0, 0.046415888336127774, 0.002154434690031882], rtol=1e-14
    )


def test_freq_rejects_odd():
    with pytest.raises(ValueError):
        freq_spectrum(3)


def test_config_validation():
    with pytest.raises(ValueError):
        RopeConfig((1, 1, 1), dims=(2, 3, 2))
    with pytest.raises(ValueError):
        RopeConfig((1, 1, 1), theta=0.0)
    with pytest.raises(ValueError):
        RopeConfig((0, 1, 1))


def test_rope_1d_examples():
    assert np.all(rope_1d([0.0], [1.0, 0.3, 0.01]) == 1.0)
    row = rope_1d([1.0], [1.0, 0.01])[0]
    np.testing.assert_allclose([row[0].real, row[0].imag], [COS1, SIN1], atol=1e-15)
    np.testing.assert_allclose([row[1].real, row[1].imag], [0.99995, 0.01], atol=1e-6)
    assert rope_1d([-1.0], [1.0])[0, 0] == np.conj(rope_1d([1.0], [1.0])[0, 0])


def test_default_origin_and_layout():
    cfg = RopeConfig((2, 3, 4), dims=(4, 6, 2))
    g = build_default_rope(cfg)
    assert g.shape == (2, 3, 4, 6)
    assert g.flat.shape == (24, 6)
    assert np.all(g.grid[0, 0, 0] == 1.0)
    # flat index s = t*S_h*S_w + h*S_w + w
    t, h, w = 1, 2, 3
    assert np.array_equal(g.flat[t * 12 + h * 4 + w], g.grid[t, h, w])


def test_default_blocks_are_pure_repetition():
    cfg = RopeConfig((3, 4, 5), dims=(4, 4, 4))
    g = build_default_rope(cfg).grid
    hb = g[..., 2:4]
    assert np.all(hb == hb[:1, :, :1])
    tb = g[..., :2]
    assert np.all(tb == tb[:, :1, :1])


def test_default_small_grid_entry():
    g = build_default_rope(RopeConfig((2, 2, 2), dims=(2, 2, 2))).grid
    np.testing.assert_allclose(g[1, 1, 1], np.full(3, COS1 + 1j * SIN1), atol=1e-15)


def test_single_cell_fractional_offset():
    cfg = RopeConfig((1, 1, 1), dims=(2, 2, 2))
    disp = DisplacementGrid(np.zeros((1, 1, 1)), np.full((1, 1, 1), 0.5))
    z = build_motion_rope(cfg, disp).grid[0, 0, 0, 2]
    assert z.real == pytest.approx(COS_HALF, abs=1e-15)
    assert z.imag == pytest.approx(SIN_HALF, abs=1e-15)


def test_motion_rope_shape_mismatch():
    with pytest.raises(ValueError, match="match"):
        build_motion_rope(RopeConfig((2, 2, 2)), DisplacementGrid.zeros(2, 2, 3))


def _random_disp(rng, seq, scale=2.0):
    return DisplacementGrid(scale * rng.standard_normal(seq), scale * rng.standard_normal(seq))


configs = st.tuples(
    st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
    st.tuples(*[st.sampled_from([2, 4, 6, 8])] * 3),
    st.sampled_from([100.0, 10000.0, 500000.0]),
    st.integers(0, 2**32 - 1),
)


@settings(max_examples=40, deadline=None)
@given(configs)
def test_unit_modulus(c):
    seq, dims, theta, seed = c
    cfg = RopeConfig(seq, dims, theta)
    g = build_motion_rope(cfg, _random_disp(np.random.default_rng(seed), seq)).grid
    assert np.max(np.abs(np.abs(g) - 1.0)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(configs)
def test_zero_flow_equivalence(c):
    seq, dims, theta, _ = c
    cfg = RopeConfig(seq, dims, theta)
    a = build_default_rope(cfg).grid
    b = build_motion_rope(cfg, DisplacementGrid.zeros(*seq)).grid
    assert np.max(np.abs(a - b)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(configs)
def test_phase_additivity(c):
    seq, dims, theta, seed = c
    cfg = RopeConfig(seq, dims, theta)
    rng = np.random.default_rng(seed)
    a, b = _random_disp(rng, seq), _random_disp(rng, seq)
    lhs = build_motion_rope(cfg, a + b).grid
    rhs = build_motion_rope(cfg, a).grid * build_motion_rope(cfg, b).grid / build_default_rope(cfg).grid
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_temporal_block_untouched():
    cfg = RopeConfig((3, 2, 2), dims=(4, 2, 2))
    rng = np.random.default_rng(1)
    m = build_motion_rope(cfg, _random_disp(rng, (3, 2, 2))).grid
    d = build_default_rope(cfg).grid
    assert np.array_equal(m[..., :2], d[..., :2])


def test_constant_shift_multiplies_default():
    cfg = RopeConfig((3, 2, 4), dims=(2, 2, 6))
    k = 0.75
    w = np.zeros((3, 2, 4))
    w[2] = k
    m = build_motion_rope(cfg, DisplacementGrid(np.zeros_like(w), w)).grid
    d = build_default_rope(cfg).grid
    f = freq_spectrum(6, cfg.theta)
    np.testing.assert_allclose(m[2, ..., 2:], d[2, ..., 2:] * np.exp(1j * k * f), atol=1e-12)
    assert np.array_equal(m[:2], d[:2])


def test_integer_shift_equivalence():
    cfg = RopeConfig((1, 1, 6), dims=(2, 2, 4))
    k = 2
    w = np.full((1, 1, 6), float(k))
    m = build_motion_rope(cfg, DisplacementGrid(np.zeros_like(w), w)).grid
    d = build_default_rope(cfg).grid
    for c in range(6 - k):
        np.testing.assert_allclose(m[0, 0, c, 2:], d[0, 0, c + k, 2:], atol=1e-15)


def test_vertical_offset_reaches_h_block_only():
    cfg = RopeConfig((1, 3, 1), dims=(2, 4, 2))
    h = np.full((1, 3, 1), 1.0)
    m = build_motion_rope(cfg, DisplacementGrid(h, np.zeros_like(h))).grid
    d = build_default_rope(cfg).grid
    np.testing.assert_allclose(m[0, 0, 0, 1:3], d[0, 1, 0, 1:3], atol=1e-15)
    assert np.array_equal(m[..., 3:], d[..., 3:])
