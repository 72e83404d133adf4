"""Progressive ensemble activation layers.

An ensemble layer pairs ReLU with one smooth activation under a live
coefficient ``alpha`` in [0, 1] that the phase schedule drives from 0
(smooth activation only) to 1 (ReLU only) over training:

* weighted mode computes ``alpha*relu(x) + (1-alpha)*acts(x)`` and
  backpropagates the same convex combination of derivatives;
* stochastic mode samples a Bernoulli(alpha) selector ``r`` (per
  element by default, optionally once per tensor) and applies ReLU
  where ``r=1``, the smooth activation where ``r=0``; the mask drawn in
  the forward routes the backward.  In eval mode it falls back to the
  weighted form, i.e. the expectation of the sampled layer.

At the exact endpoints alpha=0 and alpha=1 both modes short-circuit to
the single surviving activation without consuming any randomness, so
boundary outputs are bit-identical to the plain activation regardless
of RNG state, and a finished network collapses to pure ReLU exactly.
"""

from __future__ import annotations

import numpy as np

from . import activations as act
from . import ops
from .errors import ConfigError, ContractError
from .tensor import Tensor, make_op

WEIGHTED = "weighted"
STOCHASTIC = "stochastic"
PER_ELEMENT = "per_element"
PER_TENSOR = "per_tensor"


class EnsembleActivation:
    """One activation site pairing ReLU with a smooth partner."""

    def __init__(
        self,
        mode: str,
        sota: act.ActivationKind,
        alpha: float = 0.0,
        granularity: str = PER_ELEMENT,
        rng: np.random.Generator | None = None,
        name: str = "ensemble",
    ):
        if mode not in (WEIGHTED, STOCHASTIC):
            raise ConfigError(f"ensemble mode must be weighted|stochastic, got {mode!r}")
        if sota.name == "relu":
            raise ConfigError("the ensemble partner activation must differ from ReLU")
        if granularity not in (PER_ELEMENT, PER_TENSOR):
            raise ConfigError(f"granularity must be per_element|per_tensor, got {granularity!r}")
        if mode == STOCHASTIC and rng is None:
            raise ConfigError(f"stochastic ensemble layer {name!r} needs an rng stream")
        self.mode = mode
        self.sota = sota
        self.granularity = granularity
        self.rng = rng
        self.name = name
        self._alpha = 0.0
        self.alpha = alpha

    @property
    def alpha(self) -> float:
        return self._alpha

    @alpha.setter
    def alpha(self, value: float):
        value = float(value)
        if not (0.0 <= value <= 1.0):
            raise ContractError(
                f"ensemble layer {self.name!r}: alpha must lie in [0,1], got {value}"
            )
        self._alpha = value

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if self.mode == WEIGHTED or not training:
            return self.weighted_forward(x)
        return self.stochastic_forward(x, training=True)

    def weighted_forward(self, x: Tensor) -> Tensor:
        a = self._alpha
        if a == 1.0:
            return ops.activate(act.RELU, x)
        if a == 0.0:
            return ops.activate(self.sota, x)
        sota = self.sota
        dt = x.data.dtype.type
        out = dt(a) * act.forward(act.RELU, x.data) + dt(1.0 - a) * act.forward(sota, x.data)

        def backward(g):
            d = dt(a) * act.derivative(act.RELU, x.data) + dt(1.0 - a) * act.derivative(
                sota, x.data
            )
            x.accumulate_grad(g * d)

        return make_op(out, (x,), backward)

    def stochastic_forward(self, x: Tensor, training: bool) -> Tensor:
        if not training:
            return self.weighted_forward(x)
        a = self._alpha
        if a == 1.0:
            return ops.activate(act.RELU, x)
        if a == 0.0:
            return ops.activate(self.sota, x)
        if self.granularity == PER_ELEMENT:
            pick_relu = self.rng.random(size=x.data.shape) < a
        else:
            pick_relu = np.broadcast_to(self.rng.random() < a, x.data.shape)
        sota = self.sota
        out = np.where(pick_relu, act.forward(act.RELU, x.data), act.forward(sota, x.data))

        def backward(g):
            d = np.where(
                pick_relu, act.derivative(act.RELU, x.data), act.derivative(sota, x.data)
            )
            x.accumulate_grad(g * d)

        return make_op(out.astype(x.data.dtype, copy=False), (x,), backward)

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "sota": self.sota.describe(),
            "alpha": self._alpha,
            "granularity": self.granularity,
        }


def collapse_to_relu(model):
    """Replace every ensemble layer (all at alpha=1) with a plain ReLU.

    Raises :class:`ContractError` naming every layer still mid-schedule.
    The returned model shares parameter tensors with the original and
    produces bit-identical outputs on any input.
    """
    offending = [
        f"{layer.name} (alpha={layer.alpha})"
        for layer in model.ensemble_layers()
        if layer.alpha != 1.0
    ]
    if offending:
        raise ContractError(
            "cannot collapse to ReLU; layers not yet at alpha=1: " + ", ".join(offending)
        )
    return model.replace_ensembles_with_relu()
