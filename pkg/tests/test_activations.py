"""Activation forwards/derivatives against high-precision oracles.

Frozen expected values were computed with a 64-bit (mpmath, 30 digit)
evaluation of the defining formulas before the implementation existed:

    gelu(1)   = 0.84134474606854295
    swish1(1) = 0.73105857863000488
    mish(1)   = 0.86509838826731035
"""

import math

import numpy as np
import pytest

from pea import activations as act
from pea.errors import ConfigError
from pea.gradcheck import check_activation

ALL_KINDS = [
    act.RELU, act.RELU6, act.GELU, act.swish(1.0), act.SILU, act.MISH, act.elu(1.0),
    act.swish(0.7), act.elu(1.6),
]

GELU_1 = 0.84134474606854295
SWISH1_1 = 0.73105857863000488
MISH_1 = 0.86509838826731035


def _f(kind, x):
    return float(act.forward(kind, np.asarray([x], dtype=np.float64))[0])


def _d(kind, x):
    return float(act.derivative(kind, np.asarray([x], dtype=np.float64))[0])


class TestForwardValues:
    def test_all_zero_at_zero(self):
        for kind in (act.RELU, act.GELU, act.SILU, act.MISH, act.swish(2.0)):
            assert _f(kind, 0.0) == 0.0

    def test_relu6_clamps(self):
        assert _f(act.RELU6, 7.0) == 6.0
        assert _f(act.RELU6, -1.0) == 0.0
        assert _f(act.RELU6, 3.25) == 3.25

    def test_oracle_values_at_one(self):
        assert _f(act.GELU, 1.0) == pytest.approx(GELU_1, abs=1e-5)
        assert _f(act.swish(1.0), 1.0) == pytest.approx(SWISH1_1, abs=1e-5)
        assert _f(act.MISH, 1.0) == pytest.approx(MISH_1, abs=1e-5)

    def test_inline_64bit_oracle(self):
        # recompute the formulas with stdlib math as a second route
        assert _f(act.GELU, 1.0) == pytest.approx(
            0.5 * (1 + math.erf(1 / math.sqrt(2))), abs=1e-12)
        assert _f(act.SILU, 1.0) == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
        assert _f(act.MISH, 1.0) == pytest.approx(
            math.tanh(math.log1p(math.e)), abs=1e-12)

    def test_elu_negative_branch(self):
        assert _f(act.elu(1.0), -1.0) == pytest.approx(math.expm1(-1.0), abs=1e-12)
        assert _f(act.elu(2.5), -3.0) == pytest.approx(2.5 * math.expm1(-3.0), abs=1e-12)
        assert _f(act.elu(2.5), 3.0) == 3.0

    def test_shape_and_dtype_preserved(self, rng):
        x = rng.standard_normal((3, 4, 5)).astype(np.float32)
        for kind in ALL_KINDS:
            y = act.forward(kind, x)
            assert y.shape == x.shape and y.dtype == x.dtype


class TestLimits:
    def test_negative_saturation_at_minus_20(self):
        for kind, limit in [(act.RELU, 0.0), (act.RELU6, 0.0), (act.GELU, 0.0),
                            (act.swish(1.0), 0.0), (act.MISH, 0.0),
                            (act.elu(1.0), -1.0)]:
            assert abs(_f(kind, -20.0) - limit) <= 1e-6

    def test_unbounded_above_at_20(self):
        for kind in (act.GELU, act.swish(1.0), act.MISH, act.RELU):
            assert abs(_f(kind, 20.0) - 20.0) <= 1e-4

    def test_mish_finite_for_huge_inputs(self):
        x = np.array([-1e4, 1e4], dtype=np.float64)
        y = act.forward(act.MISH, x)
        assert np.all(np.isfinite(y))
        assert y[1] == pytest.approx(1e4)


class TestSwishSiluEquivalence:
    def test_bitwise_equal_at_beta_one(self, rng):
        x = rng.uniform(-10, 10, 4096).astype(np.float32)
        np.testing.assert_array_equal(
            act.forward(act.swish(1.0), x), act.forward(act.SILU, x)
        )
        np.testing.assert_array_equal(
            act.derivative(act.swish(1.0), x), act.derivative(act.SILU, x)
        )


class TestDerivatives:
    def test_relu_convention(self):
        assert _d(act.RELU, -0.5) == 0.0
        assert _d(act.RELU, 0.5) == 1.0
        assert _d(act.RELU, 0.0) == 0.0  # documented kink convention
        assert _d(act.RELU6, 0.0) == 0.0
        assert _d(act.RELU6, 6.0) == 0.0
        assert _d(act.RELU6, 5.999) == 1.0

    def test_gelu_derivative_at_zero_is_half(self):
        assert _d(act.GELU, 0.0) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: f"{k.name}-{k.beta}-{k.a}")
    def test_finite_difference_agreement(self, kind):
        rep = check_activation(kind, n=100, seed=7)
        assert rep["ok"], rep

    def test_derivative_matches_fd_on_dense_grid(self):
        # second route: explicit central differences, 1e-4 abs tolerance
        xs = np.linspace(-5, 5, 801)
        xs = xs[np.abs(xs) > 2e-3]
        h = 1e-3
        for kind in (act.GELU, act.SILU, act.MISH, act.swish(0.7)):
            fd = (act.forward(kind, xs + h) - act.forward(kind, xs - h)) / (2 * h)
            assert np.abs(act.derivative(kind, xs) - fd).max() <= 1e-4


class TestKindValidation:
    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigError):
            act.ActivationKind("tanh")

    def test_bad_parameters_rejected(self):
        with pytest.raises(ConfigError):
            act.ActivationKind("swish", beta=0.0)
        with pytest.raises(ConfigError):
            act.ActivationKind("swish", beta=float("inf"))
        with pytest.raises(ConfigError):
            act.ActivationKind("elu", a=-1.0)

    def test_describe_round_trip(self):
        for kind in ALL_KINDS:
            assert act.ActivationKind.from_dict(kind.describe()) == kind
