"""The erf/sigmoid/softplus building blocks against stdlib oracles."""

import math

import numpy as np

from pea.special import erf, sigmoid, softplus


class TestErf:
    def test_against_stdlib_dense_grid(self):
        xs = np.linspace(-8.0, 8.0, 20001)
        ours = erf(xs)
        ref = np.array([math.erf(float(x)) for x in xs])
        assert np.abs(ours - ref).max() <= 1e-7  # contract; measured ~1e-16

    def test_regime_boundaries(self):
        pts = np.array([0.0, 0.46875, -0.46875, 0.469, 4.0, -4.0, 4.001, 10.0, -10.0, 30.0])
        ref = np.array([math.erf(float(x)) for x in pts])
        assert np.abs(erf(pts) - ref).max() <= 1e-7

    def test_odd_symmetry(self, rng):
        xs = rng.uniform(-6, 6, 1000)
        np.testing.assert_array_equal(erf(-xs), -erf(xs))

    def test_zero_is_positive_zero(self):
        v = erf(np.array([0.0]))[0]
        assert v == 0.0 and math.copysign(1.0, v) == 1.0

    def test_preserves_float32(self):
        x = np.linspace(-3, 3, 11, dtype=np.float32)
        y = erf(x)
        assert y.dtype == np.float32
        ref = np.array([math.erf(float(v)) for v in x])
        assert np.abs(y.astype(np.float64) - ref).max() < 1e-6


class TestSigmoid:
    def test_matches_closed_form(self):
        xs = np.linspace(-30, 30, 1001)
        ref = 1.0 / (1.0 + np.exp(-xs))
        assert np.abs(sigmoid(xs) - ref).max() < 1e-15

    def test_no_overflow_at_extremes(self):
        xs = np.array([-1e4, -745.0, 745.0, 1e4])
        out = sigmoid(xs)
        assert np.all(np.isfinite(out))
        assert out[0] == 0.0 and out[-1] == 1.0

    def test_symmetry(self, rng):
        xs = rng.uniform(-20, 20, 500)
        np.testing.assert_allclose(sigmoid(xs) + sigmoid(-xs), 1.0, atol=1e-12)


class TestSoftplus:
    def test_matches_naive_in_safe_range(self):
        xs = np.linspace(-30, 30, 1001)
        ref = np.log1p(np.exp(xs))
        assert np.abs(softplus(xs) - ref).max() < 1e-12

    def test_finite_up_to_1e4(self):
        xs = np.array([-1e4, -100.0, 0.0, 100.0, 1e4])
        out = softplus(xs)
        assert np.all(np.isfinite(out))
        assert out[-1] == 1e4  # linear regime
        assert out[0] == 0.0
