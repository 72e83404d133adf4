"""Ensemble activation layer: boundary equivalence, gradients, sampling."""

import numpy as np
import pytest

from pea import activations as act
from pea import ops
from pea.ensemble import (
    PER_TENSOR,
    EnsembleActivation,
    collapse_to_relu,
)
from pea.errors import ConfigError, ContractError
from pea.tensor import Tensor

SOTAS = [act.GELU, act.swish(1.0), act.MISH, act.elu(1.0)]


def _stream(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def _layer(mode, sota=act.GELU, alpha=0.0, granularity="per_element", seed=0):
    return EnsembleActivation(mode, sota, alpha=alpha, granularity=granularity,
                              rng=_stream(seed), name="t")


class TestConstruction:
    def test_relu_partner_rejected(self):
        with pytest.raises(ConfigError):
            EnsembleActivation("weighted", act.RELU)

    def test_bad_mode_rejected(self):
        with pytest.raises(ConfigError):
            EnsembleActivation("mixed", act.GELU)

    def test_alpha_contract(self):
        layer = _layer("weighted")
        with pytest.raises(ContractError, match="alpha"):
            layer.alpha = 1.5
        with pytest.raises(ContractError):
            layer.alpha = -0.01
        layer.alpha = 1.0  # endpoints are legal
        layer.alpha = 0.0

    def test_stochastic_requires_rng(self):
        with pytest.raises(ConfigError):
            EnsembleActivation("stochastic", act.GELU, rng=None)


class TestBoundaryEquivalence:
    @pytest.mark.parametrize("sota", SOTAS, ids=lambda k: k.name)
    @pytest.mark.parametrize("mode", ["weighted", "stochastic"])
    @pytest.mark.parametrize("training", [True, False])
    def test_bit_identical_at_endpoints(self, mode, sota, training, rng):
        x = Tensor(rng.uniform(-10, 10, 10000).astype(np.float32))
        layer = _layer(mode, sota=sota, alpha=1.0)
        np.testing.assert_array_equal(
            layer.forward(x, training).data, act.forward(act.RELU, x.data))
        layer.alpha = 0.0
        np.testing.assert_array_equal(
            layer.forward(x, training).data, act.forward(sota, x.data))

    def test_endpoints_ignore_rng_state(self, rng):
        # two layers with different streams must agree exactly at alpha=1
        x = Tensor(rng.uniform(-10, 10, 1000).astype(np.float32))
        a = _layer("stochastic", alpha=1.0, seed=1)
        b = _layer("stochastic", alpha=1.0, seed=99)
        np.testing.assert_array_equal(
            a.forward(x, True).data, b.forward(x, True).data)


class TestWeighted:
    def test_midpoint_value_oracle(self):
        # 0.5*relu(1) + 0.5*gelu(1), gelu(1) frozen from the 64-bit oracle
        layer = _layer("weighted", alpha=0.5)
        out = layer.weighted_forward(Tensor(np.array([1.0])))
        assert out.data[0] == pytest.approx(0.92067237303427147, abs=1e-5)

    @pytest.mark.parametrize("alpha", np.linspace(0.05, 0.95, 19).tolist() + [0.5])
    def test_gradient_is_convex_combination(self, alpha, rng):
        x = Tensor(rng.standard_normal(64), requires_grad=True)
        layer = _layer("weighted", sota=act.MISH, alpha=alpha)
        out = layer.weighted_forward(x)
        gy = rng.standard_normal(64)
        out._backward_fn(gy)
        want = gy * (alpha * act.derivative(act.RELU, x.data)
                     + (1 - alpha) * act.derivative(act.MISH, x.data))
        np.testing.assert_allclose(x.grad, want, atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_gradient_matches_finite_differences(self, alpha, rng):
        xs = rng.standard_normal(100)
        xs = xs[np.abs(xs) > 2e-3]  # keep clear of the relu kink
        layer = _layer("weighted", sota=act.GELU, alpha=alpha)
        h = 1e-3
        fp = layer.weighted_forward(Tensor(xs + h)).data
        fm = layer.weighted_forward(Tensor(xs - h)).data
        fd = (fp - fm) / (2 * h)
        x = Tensor(xs, requires_grad=True)
        out = layer.weighted_forward(x)
        out._backward_fn(np.ones_like(xs))
        assert np.abs(x.grad - fd).max() <= 1e-4


class TestStochastic:
    def test_selection_rate_three_sigma(self):
        n = 10 ** 6
        layer = _layer("stochastic", alpha=0.3, seed=42)
        x = Tensor(np.full(n, -1.0, dtype=np.float32))  # relu(x)=0, gelu(x)!=0
        out = layer.stochastic_forward(x, training=True)
        relu_rate = (out.data == 0.0).mean()
        assert 0.2986 <= relu_rate <= 0.3014  # 0.3 +/- 3*sqrt(.3*.7/1e6)

    def test_backward_routes_through_selected_branch(self, rng):
        xs = rng.standard_normal(512)
        layer = _layer("stochastic", sota=act.GELU, alpha=0.4, seed=7)
        snap = layer.rng.bit_generator.state
        x = Tensor(xs, requires_grad=True)
        out = layer.stochastic_forward(x, training=True)
        gy = rng.standard_normal(512)
        out._backward_fn(gy)

        # replay the same draws to recover the mask, then hand-mask 0/1 weights
        layer.rng.bit_generator.state = snap
        mask = layer.rng.random(size=xs.shape) < 0.4
        np.testing.assert_array_equal(
            out.data, np.where(mask, act.forward(act.RELU, xs), act.forward(act.GELU, xs)))
        want = gy * np.where(mask, act.derivative(act.RELU, xs),
                             act.derivative(act.GELU, xs))
        np.testing.assert_array_equal(x.grad, want)

    def test_eval_mode_equals_weighted(self, rng):
        xs = rng.standard_normal(256).astype(np.float32)
        layer = _layer("stochastic", sota=act.MISH, alpha=0.37)
        ev = layer.forward(Tensor(xs), training=False)
        wt = layer.weighted_forward(Tensor(xs))
        np.testing.assert_array_equal(ev.data, wt.data)

    def test_per_tensor_granularity_picks_one_branch(self, rng):
        xs = rng.standard_normal(1000)
        layer = _layer("stochastic", alpha=0.5, granularity=PER_TENSOR, seed=3)
        for _ in range(8):
            out = layer.stochastic_forward(Tensor(xs), training=True).data
            assert (np.array_equal(out, act.forward(act.RELU, xs))
                    or np.array_equal(out, act.forward(act.GELU, xs)))

    def test_fresh_mask_every_call(self):
        layer = _layer("stochastic", alpha=0.5, seed=5)
        x = Tensor(np.full(4096, -1.0))
        a = layer.stochastic_forward(x, training=True).data
        b = layer.stochastic_forward(x, training=True).data
        assert not np.array_equal(a, b)


class TestCollapse:
    def _model(self, slot_mode, alpha):
        from tests.conftest import ensemble_slot, tiny_spec
        from pea import models

        spec = tiny_spec("small_cnn", slot=ensemble_slot(slot_mode, "gelu"))
        model = models.build(spec, seed=0)
        for layer in model.ensemble_layers():
            layer.alpha = alpha
        return model

    def test_collapse_at_alpha_one_is_bit_exact(self, rng):
        model = self._model("weighted", 1.0)
        plain = collapse_to_relu(model)
        assert plain.ensemble_layers() == []
        x = rng.standard_normal((8, 1, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(
            model.forward(x, training=False).data,
            plain.forward(x, training=False).data)

    def test_collapse_refuses_midway_and_names_layers(self):
        model = self._model("stochastic", 0.5)
        with pytest.raises(ContractError, match=r"act0.*alpha=0\.5"):
            collapse_to_relu(model)

    def test_consistency_with_tensor_backprop(self, rng):
        # gradient through ops.activate(kind) equals derivative() elementwise
        xs = rng.standard_normal(128)
        for kind in SOTAS:
            x = Tensor(xs, requires_grad=True)
            out = ops.activate(kind, x)
            out._backward_fn(np.ones_like(xs))
            np.testing.assert_array_equal(x.grad, act.derivative(kind, xs))
