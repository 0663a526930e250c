import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpdropout.mechanism import (
    NoiseSpec,
    alpha_to_drop_prob,
    clip_by_l2,
    drop_prob_to_alpha,
    dropout_alpha_from_noise,
    sample_update_noise,
)

vectors = arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3, allow_subnormal=False))


def test_noise_spec_derived_quantities():
    spec = NoiseSpec(3.0, 1.5)
    assert spec.sensitivity == 6.0
    assert spec.noise_std == 9.0
    assert spec.noise_variance == 81.0
    with pytest.raises(ValueError):
        NoiseSpec(0.0, 1.0)


def test_clip_examples():
    np.testing.assert_array_equal(clip_by_l2(np.zeros(4), 3.0), np.zeros(4))
    g = np.array([1.2, 1.6])  # norm 2
    np.testing.assert_array_equal(clip_by_l2(g, 3.0), g)
    np.testing.assert_allclose(clip_by_l2(np.array([6.0, 8.0]), 5.0), [3.0, 4.0], rtol=1e-15)


def test_clip_does_not_alias_input():
    g = np.array([0.1, 0.2])
    out = clip_by_l2(g, 1.0)
    out[0] = 99
    assert g[0] == 0.1


def test_clip_matrix_uses_frobenius_norm():
    m = np.full((3, 4), 2.0)  # norm sqrt(48)
    out = clip_by_l2(m, 1.0)
    assert out.shape == (3, 4)
    assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-14)


@given(g=vectors, c=st.floats(1e-3, 1e3))
def test_clip_norm_is_min(g, c):
    out = clip_by_l2(g, c)
    assert np.linalg.norm(out) == pytest.approx(min(np.linalg.norm(g), c), rel=1e-12, abs=1e-300)


@given(g=vectors, c=st.floats(1e-3, 1e3))
def test_clip_idempotent(g, c):
    once = clip_by_l2(g, c)
    np.testing.assert_allclose(clip_by_l2(once, c), once, rtol=1e-14, atol=0)


@given(g=vectors, c=st.floats(1e-3, 1e3))
def test_clip_preserves_direction(g, c):
    out = clip_by_l2(g, c)
    nz = g != 0
    ratios = out[nz] / g[nz]
    if ratios.size:
        assert np.all(ratios > 0)
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    assert np.all(out[~nz] == 0)


def test_replacing_one_clipped_summand_moves_sum_at_most_2c():
    rng = np.random.default_rng(0)
    C = 1.5
    for _ in range(500):
        n, d = rng.integers(1, 20), rng.integers(1, 30)
        vs = rng.normal(scale=rng.uniform(0.01, 10), size=(n, d))
        clipped = np.array([clip_by_l2(v, C) for v in vs])
        i = rng.integers(n)
        replacement = clip_by_l2(rng.normal(scale=10, size=d), C)
        other = clipped.copy()
        other[i] = replacement
        assert np.linalg.norm(clipped.sum(0) - other.sum(0)) <= 2 * C * (1 + 1e-12)


def test_noise_statistics():
    spec = NoiseSpec(3.0, 1.0)
    x = sample_update_noise(1_000_000, spec, np.random.default_rng(42))
    target = 4 * 9 * 1.0
    assert abs(x.var() / target - 1) < 0.01
    assert abs(x.mean()) < 4 * np.sqrt(target / x.size)


def test_noise_deterministic_and_shaped():
    spec = NoiseSpec(2.0, 0.5)
    a = sample_update_noise((3, 4), spec, np.random.default_rng(1))
    b = sample_update_noise((3, 4), spec, np.random.default_rng(1))
    assert a.shape == (3, 4)
    np.testing.assert_array_equal(a, b)


def test_alpha_at_equality_point():
    spec = NoiseSpec(2.0, 0.75)
    m = dropout_alpha_from_noise(spec, np.array([2 * 2.0 * 0.75]))
    assert m.alpha[0] == pytest.approx(1.0) and m.drop_prob[0] == pytest.approx(0.5)


def test_alpha_zero_weight_is_masked_not_nan():
    m = dropout_alpha_from_noise(NoiseSpec(1.0, 1.0), np.array([0.0, 1.0]))
    assert list(m.defined) == [False, True]
    assert not np.isnan(m.alpha.data).any()
    assert m.alpha.compressed().tolist() == [4.0]


def test_alpha_value_for_mnist_constant():
    m = dropout_alpha_from_noise(NoiseSpec(3.0, 3.23), np.array([1.0]))
    assert m.alpha[0] == pytest.approx(375.5844, rel=1e-13)
    assert m.drop_prob[0] == pytest.approx(0.99734455277488924130, rel=1e-13)


@given(theta=arrays(np.float64, st.integers(1, 30), elements=st.floats(-10, 10)))
def test_alpha_theta_squared_equals_noise_variance(theta):
    spec = NoiseSpec(2.0, 1.3)
    m = dropout_alpha_from_noise(spec, theta)
    d = m.defined
    np.testing.assert_allclose(m.alpha.data[d] * theta[d] ** 2, spec.noise_variance, rtol=1e-12)


def test_dropout_summary():
    m = dropout_alpha_from_noise(NoiseSpec(1.0, 0.5), np.array([1.0, 0.5, 0.0, -2.0]))
    s = m.summary()
    assert s["alpha_min"] == pytest.approx(0.25) and s["alpha_max"] == pytest.approx(4.0)
    assert s["alpha_median"] == pytest.approx(1.0)
    assert s["p_max"] == pytest.approx(0.8)
    empty = dropout_alpha_from_noise(NoiseSpec(1.0, 0.5), np.zeros(3)).summary()
    assert all(v is None for v in empty.values())


def test_drop_prob_to_alpha():
    assert drop_prob_to_alpha(0.0) == 0.0
    assert drop_prob_to_alpha(0.5) == 1.0
    with pytest.raises(ValueError):
        drop_prob_to_alpha(1.0)
    p = np.arange(1, 100) / 100
    np.testing.assert_allclose(alpha_to_drop_prob(drop_prob_to_alpha(p)), p, rtol=1e-14)
