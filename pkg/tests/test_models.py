"""Model zoo: deterministic builds, twin equivalence, activation swaps."""

import numpy as np
import pytest

from pea import models, ops
from pea.errors import ConfigError
from pea.tensor import Tensor

from tests.conftest import TINY_SPECS, ensemble_slot, plain_slot, tiny_spec

ARCHS = list(TINY_SPECS)


def _params_equal(a, b):
    pa, pb = dict(a.parameters()), dict(b.parameters())
    assert pa.keys() == pb.keys()
    return all(np.array_equal(pa[k].data, pb[k].data) for k in pa)


class TestBuild:
    def test_mlp_784_128_10_deterministic(self):
        spec = models.ModelSpec(architecture="mlp", num_classes=10, in_channels=1,
                                image_size=28, hidden=(128,))
        m1 = models.build(spec, seed=0)
        m2 = models.build(spec, seed=0)
        assert _params_equal(m1, m2)
        names = dict(m1.parameters())
        assert names["fc0.w"].shape == (784, 128)
        assert names["head.w"].shape == (128, 10)

    def test_different_seeds_differ(self):
        spec = tiny_spec("mlp")
        m1, m2 = models.build(spec, seed=0), models.build(spec, seed=1)
        assert not np.array_equal(dict(m1.parameters())["fc0.w"].data,
                                  dict(m2.parameters())["fc0.w"].data)

    @pytest.mark.parametrize("arch", ARCHS)
    def test_build_twice_bit_identical(self, arch):
        spec = tiny_spec(arch)
        assert _params_equal(models.build(spec, seed=7), models.build(spec, seed=7))

    def test_resnet_zero_input_finite_softmax(self):
        model = models.build(tiny_spec("tiny_resnet"), seed=0)
        logits = model.forward(np.zeros((2, 1, 8, 8), dtype=np.float32), training=False)
        assert np.all(np.isfinite(logits.data))
        probs = ops.softmax(logits)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-6)

    @pytest.mark.parametrize("arch", ARCHS)
    def test_parameter_count_reported(self, arch):
        model = models.build(tiny_spec(arch), seed=0)
        assert model.num_parameters() == sum(p.size for _, p in model.parameters())
        assert model.num_parameters() > 0

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ConfigError):
            models.build(tiny_spec("small_cnn", channels=(4, 4)), seed=0)
        with pytest.raises(ConfigError):
            models.build(tiny_spec("tiny_depthwise", channels=(4, 4, 4)), seed=0)

    def test_depthwise_names_carry_dw_token(self):
        model = models.build(tiny_spec("tiny_depthwise"), seed=0)
        names = [n for n, _ in model.parameters()]
        assert any(".dw.w" in n for n in names)


class TestTwinEquivalence:
    @pytest.mark.parametrize("arch", ARCHS)
    @pytest.mark.parametrize("mode", ["weighted", "stochastic"])
    def test_alpha_one_equals_plain_relu_twin(self, arch, mode, rng):
        spec = tiny_spec(arch, slot=ensemble_slot(mode, "gelu"))
        model = models.build(spec, seed=11)
        for l in model.ensemble_layers():
            l.alpha = 1.0
        twin = models.build(tiny_spec(arch, slot=plain_slot("relu")), seed=11)
        x = rng.standard_normal((4, 1, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(
            model.forward(x, training=False).data,
            twin.forward(x, training=False).data)

    @pytest.mark.parametrize("mode", ["weighted", "stochastic"])
    def test_alpha_zero_equals_plain_sota_twin(self, mode, rng):
        spec = tiny_spec("tiny_depthwise", slot=ensemble_slot(mode, "mish"))
        model = models.build(spec, seed=5)
        twin = models.build(tiny_spec("tiny_depthwise", slot=plain_slot("mish")), seed=5)
        for x in rng.standard_normal((3, 2, 1, 8, 8)).astype(np.float32):
            np.testing.assert_array_equal(
                model.forward(x, training=False).data,
                twin.forward(x, training=False).data)


class TestSwapActivation:
    def test_round_trip_preserves_logits(self, rng):
        model = models.build(tiny_spec("small_cnn", slot=plain_slot("relu")), seed=2)
        x = rng.standard_normal((4, 1, 8, 8)).astype(np.float32)
        before = model.forward(x, training=False).data
        swapped = model.swap_activation(plain_slot("gelu"))
        back = swapped.swap_activation(plain_slot("relu"))
        np.testing.assert_array_equal(before, back.forward(x, training=False).data)
        assert _params_equal(model, back)

    def test_relu6_equals_relu_when_preactivations_bounded(self, rng):
        # weights scaled down so every pre-activation stays inside (-6, 6)
        model = models.build(tiny_spec("small_cnn", slot=plain_slot("relu")), seed=4)
        for _, p in model.parameters():
            p.data *= 0.25
        twin = model.swap_activation(plain_slot("relu6"))
        x = (rng.uniform(0, 1, (4, 1, 8, 8))).astype(np.float32)
        a = model.forward(x, training=False)
        b = twin.forward(x, training=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_ensemble_alpha_zero_equals_plain_mish_swap(self, rng):
        base = models.build(tiny_spec("small_cnn", slot=plain_slot("relu")), seed=6)
        ens = base.swap_activation(ensemble_slot("weighted", "mish"))
        plain = base.swap_activation(plain_slot("mish"))
        for x in rng.standard_normal((100, 1, 1, 8, 8)).astype(np.float32):
            np.testing.assert_array_equal(
                ens.forward(x, training=False).data,
                plain.forward(x, training=False).data)

    def test_swap_reaches_nested_residual_sites(self):
        model = models.build(
            tiny_spec("tiny_resnet", slot=ensemble_slot("weighted", "gelu")), seed=0)
        n_sites = len(model.activation_sites())
        assert len(model.ensemble_layers()) == n_sites  # every site is an ensemble
        plain = model.replace_ensembles_with_relu()
        assert plain.ensemble_layers() == []
        assert len(plain.activation_sites()) == n_sites


class TestTrainingSmoke:
    @staticmethod
    def _train_mode_loss(model, ds, bs=64):
        # same forward the trainer optimizes (batch-stat BN, live masks)
        total = 0.0
        for i in range(0, len(ds), bs):
            logits = model.forward(Tensor(ds.images[i : i + bs]), training=True)
            loss = ops.label_smoothed_cross_entropy(logits, ds.labels[i : i + bs], 0.1)
            total += float(loss.data) * len(ds.labels[i : i + bs])
        return total / len(ds)

    @pytest.mark.parametrize("arch", ARCHS)
    @pytest.mark.parametrize("slot_name", ["relu", "gelu", "ens-w", "ens-s"])
    def test_one_epoch_decreases_training_loss(self, arch, slot_name):
        from pea import data as data_mod
        from pea import training as train_mod

        slot = {
            "relu": plain_slot("relu"),
            "gelu": plain_slot("gelu"),
            "ens-w": ensemble_slot("weighted", "gelu"),
            "ens-s": ensemble_slot("stochastic", "mish"),
        }[slot_name]
        spec = tiny_spec(arch, slot=slot, num_classes=4)
        model = models.build(spec, seed=0)
        if slot.slot == "ensemble":
            for l in model.ensemble_layers():
                l.alpha = 0.5
        train_ds = data_mod.synth_classification(1024, 4, 0.3, seed=99, image_size=8)
        before = self._train_mode_loss(model, train_ds)
        cfg = train_mod.TrainConfig(epochs=1, batch_size=64, base_lr=0.05,
                                    label_smoothing=0.1, seed=0)
        _, records, _ = train_mod.train(model, train_ds, train_ds, cfg)
        assert records[0].train_loss < before
