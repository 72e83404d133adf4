import numpy as np
import pytest

from pea import models
from pea.activations import ActivationKind

# tiny float64-checkable variants of every architecture
TINY_SPECS = {
    "mlp": dict(architecture="mlp", num_classes=3, image_size=8, hidden=(16,)),
    "small_cnn": dict(architecture="small_cnn", num_classes=3, image_size=8,
                      channels=(4, 4, 4)),
    "tiny_resnet": dict(architecture="tiny_resnet", num_classes=3, image_size=8,
                        channels=(4, 4, 4)),
    "tiny_depthwise": dict(architecture="tiny_depthwise", num_classes=3, image_size=8,
                           channels=(4, 4, 4, 4, 4)),
}


def tiny_spec(arch, slot=None, **overrides):
    kw = dict(TINY_SPECS[arch])
    kw.update(overrides)
    if slot is not None:
        kw["activation"] = slot
    return models.ModelSpec(**kw)


def plain_slot(kind_name, **kind_kw):
    return models.ActivationSlot("plain", kind=ActivationKind(kind_name, **kind_kw))


def ensemble_slot(mode, sota_name, granularity="per_element", **kind_kw):
    return models.ActivationSlot(
        "ensemble", mode=mode, sota=ActivationKind(sota_name, **kind_kw),
        granularity=granularity,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
