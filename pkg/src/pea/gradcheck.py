"""Finite-difference verification of analytic gradients.

Central differences with h=1e-3 on float64-built models are compared
against the recorded backward pass.  An element passes when

    |analytic - fd| <= max(abs_tol, rel_tol * |fd|)

i.e. the looser of 1e-2 relative and 1e-4 absolute by default.

Stochastic layers (dropout, stochastic ensembles) are handled by
snapshotting every RNG stream and restoring it before each forward, so
all evaluations see identical masks and the loss stays a deterministic
function of the parameters.
"""

from __future__ import annotations

import numpy as np

from . import activations as act
from . import models, ops
from .rng import RngHub
from .tensor import Tensor

REL_TOL = 1e-2
ABS_TOL = 1e-4
FD_STEP = 1e-3


def fd_gradients(loss_fn, params, h: float = FD_STEP) -> dict[str, np.ndarray]:
    """Central-difference gradient of loss_fn w.r.t. each named tensor."""
    out = {}
    for name, p in params:
        flat = p.data.reshape(-1)
        grad = np.empty(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = float(loss_fn())
            flat[i] = orig - h
            lm = float(loss_fn())
            flat[i] = orig
            grad[i] = (lp - lm) / (2.0 * h)
        out[name] = grad.reshape(p.data.shape)
    return out


def compare_grads(analytic: dict[str, np.ndarray], fd: dict[str, np.ndarray],
                  rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> dict:
    """Worst-case agreement report across parameter tensors."""
    rows = {}
    ok = True
    for name, f in fd.items():
        a = analytic[name].astype(np.float64)
        diff = np.abs(a - f)
        allowed = np.maximum(abs_tol, rel_tol * np.abs(f))
        viol = diff - allowed
        rows[name] = {
            "max_abs_err": float(diff.max()) if diff.size else 0.0,
            "worst_violation": float(viol.max()) if viol.size else 0.0,
            "ok": bool((viol <= 0).all()),
        }
        ok &= rows[name]["ok"]
    return {"ok": ok, "params": rows}


def check_activation(kind: act.ActivationKind, n: int = 100, seed: int = 0,
                     h: float = FD_STEP, abs_tol: float = ABS_TOL) -> dict:
    """FD check of the closed-form derivative at n random points.

    Points within 1e-3 of a kink (0 for relu/relu6/elu, also 6 for
    relu6) are resampled; the derivative there is a documented
    convention, not a limit of difference quotients.
    """
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal(n)
    kinks = {"relu": (0.0,), "relu6": (0.0, 6.0), "elu": (0.0,)}.get(kind.name, ())
    if kinks:
        for _ in range(100):
            near = np.zeros(n, dtype=bool)
            for k in kinks:
                near |= np.abs(xs - k) < 1e-3 + h
            if not near.any():
                break
            xs[near] = rng.standard_normal(int(near.sum()))
    fd = (act.forward(kind, xs + h) - act.forward(kind, xs - h)) / (2.0 * h)
    analytic = act.derivative(kind, xs)
    err = float(np.abs(analytic - fd).max())
    return {"kind": kind.name, "max_abs_err": err, "ok": err <= abs_tol}


def _loss_fn(model, x64: np.ndarray, labels: np.ndarray, training: bool, smoothing=0.1):
    snap = model.hub.snapshot()

    def run():
        model.hub.restore(snap)
        logits = model.forward(Tensor(x64), training=training)
        return ops.label_smoothed_cross_entropy(logits, labels, smoothing)

    return run


def check_model(spec: models.ModelSpec, seed: int = 0, batch: int = 2,
                training: bool = True, alpha: float | None = None,
                rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> dict:
    """FD-check every parameter of a float64 build of ``spec``."""
    hub = RngHub(seed)
    model = models.build(spec, hub=hub, dtype=np.float64)
    if alpha is not None:
        for layer in model.ensemble_layers():
            layer.alpha = alpha
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal(
        (batch, spec.in_channels, spec.image_size, spec.image_size)
    )
    labels = rng.integers(0, spec.num_classes, size=batch)
    loss_fn = _loss_fn(model, x, labels, training)

    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = model.gradients()
    fd = fd_gradients(loss_fn, model.parameters())
    report = compare_grads(analytic, fd, rel_tol, abs_tol)
    report["spec"] = spec.architecture
    report["num_params"] = model.num_parameters()
    return report
