"""Scalar activation functions with exact forwards and first derivatives.

All functions are pure, elementwise, dtype-preserving maps on NumPy
arrays.  GELU uses the exact erf formulation (see :mod:`pea.special`),
never the tanh approximation.

Derivative conventions at kink points, fixed here because boundary
tests exercise them:

* relu'(0) = 0 and relu6'(0) = relu6'(6) = 0 (subgradient choice 0);
* elu'(0) = 1 (right limit; for the default a=1 the derivative is
  continuous there anyway).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .special import erf, sigmoid, softplus

_INV_SQRT_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_NAMES = ("relu", "relu6", "gelu", "swish", "silu", "mish", "elu")


@dataclass(frozen=True)
class ActivationKind:
    """Tagged activation selector.

    ``beta`` is the Swish slope (ignored by other kinds); ``a`` is the
    ELU saturation level.  Both are constants, never trained.
    """

    name: str
    beta: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if self.name not in _NAMES:
            raise ConfigError(f"unknown activation kind {self.name!r}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"swish beta must be finite and > 0, got {self.beta}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError(f"elu a must be finite and > 0, got {self.a}")

    def describe(self) -> dict:
        d = {"name": self.name}
        if self.name == "swish" and self.beta != 1.0:
            d["beta"] = self.beta
        if self.name == "elu" and self.a != 1.0:
            d["a"] = self.a
        return d

    @staticmethod
    def from_dict(d: dict) -> "ActivationKind":
        return ActivationKind(d["name"], beta=d.get("beta", 1.0), a=d.get("a", 1.0))


RELU = ActivationKind("relu")
RELU6 = ActivationKind("relu6")
GELU = ActivationKind("gelu")
SILU = ActivationKind("silu")
MISH = ActivationKind("mish")


def swish(beta: float = 1.0) -> ActivationKind:
    return ActivationKind("swish", beta=beta)


def elu(a: float = 1.0) -> ActivationKind:
    return ActivationKind("elu", a=a)


def forward(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Apply the activation elementwise. Output shape equals input shape."""
    x = np.asarray(x)
    n = kind.name
    if n == "relu":
        return np.maximum(x, 0).astype(x.dtype, copy=False)
    if n == "relu6":
        return np.clip(x, 0, 6).astype(x.dtype, copy=False)
    if n == "gelu":
        return (x * 0.5 * (1.0 + erf(x * _INV_SQRT_2))).astype(x.dtype, copy=False)
    if n == "swish":
        return (x * sigmoid(kind.beta * x)).astype(x.dtype, copy=False)
    if n == "silu":
        return (x * sigmoid(x)).astype(x.dtype, copy=False)
    if n == "mish":
        return (x * np.tanh(softplus(x))).astype(x.dtype, copy=False)
    if n == "elu":
        return np.where(x > 0, x, kind.a * np.expm1(np.minimum(x, 0))).astype(x.dtype, copy=False)
    raise ConfigError(f"unknown activation kind {n!r}")


def derivative(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Elementwise first derivative, kink conventions as documented."""
    x = np.asarray(x)
    n = kind.name
    if n == "relu":
        return (x > 0).astype(x.dtype)
    if n == "relu6":
        return ((x > 0) & (x < 6)).astype(x.dtype)
    if n == "gelu":
        phi = 0.5 * (1.0 + erf(x * _INV_SQRT_2))
        dens = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (phi + x * dens).astype(x.dtype, copy=False)
    if n in ("swish", "silu"):
        b = kind.beta if n == "swish" else 1.0
        s = sigmoid(b * x)
        return (s * (1.0 + b * x * (1.0 - s))).astype(x.dtype, copy=False)
    if n == "mish":
        t = np.tanh(softplus(x))
        return (t + x * (1.0 - t * t) * sigmoid(x)).astype(x.dtype, copy=False)
    if n == "elu":
        # at x=0 the right limit 1 is used
        return np.where(x >= 0, np.ones_like(x), kind.a * np.exp(np.minimum(x, 0))).astype(
            x.dtype, copy=False
        )
    raise ConfigError(f"unknown activation kind {n!r}")
