"""The fixed layer-op vocabulary, differentiable end to end.

Every op takes/returns :class:`~pea.tensor.Tensor` and registers a
backward closure.  Reductions (means, losses, batch statistics)
accumulate in float64 and cast back to the working dtype, which keeps
finite-difference checks meaningful while storage stays 32-bit during
training.
"""

from __future__ import annotations

import numpy as np

from . import activations as act
from . import kernels
from .errors import ShapeError
from .tensor import Tensor, make_op, unbroadcast


def _sum64(a: np.ndarray, axis=None, keepdims=False) -> np.ndarray:
    return np.sum(a, axis=axis, keepdims=keepdims, dtype=np.float64)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(unbroadcast(g, b.data.shape))

    return make_op(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(unbroadcast(g * a.data, b.data.shape))

    return make_op(out, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * a.data.dtype.type(s)

    def backward(g):
        a.accumulate_grad(g * a.data.dtype.type(s))

    return make_op(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul shapes incompatible: {a.data.shape} x {b.data.shape}"
        )
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return make_op(out, (a, b), backward)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias: (N,F)+(F,) or (N,C,H,W)+(C,)."""
    if b.data.ndim != 1:
        raise ShapeError(f"bias must be 1-D, got shape {b.data.shape}")
    if x.data.ndim == 2:
        if x.data.shape[1] != b.data.shape[0]:
            raise ShapeError(f"bias length {b.data.shape[0]} vs features {x.data.shape[1]}")
        bb = b.data
        axes = (0,)
    elif x.data.ndim == 4:
        if x.data.shape[1] != b.data.shape[0]:
            raise ShapeError(f"bias length {b.data.shape[0]} vs channels {x.data.shape[1]}")
        bb = b.data[:, None, None]
        axes = (0, 2, 3)
    else:
        raise ShapeError(f"bias_add expects 2-D or 4-D input, got {x.data.ndim}-D")
    out = x.data + bb

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(_sum64(g, axis=axes).astype(b.data.dtype))

    return make_op(out, (x, b), backward)


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return bias_add(y, b) if b is not None else y


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def backward(g):
        x.accumulate_grad(g.reshape(x.data.shape))

    return make_op(out, (x,), backward)


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.data.shape[0], -1))


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    out = kernels.conv2d_forward(x.data, w.data, stride, padding)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(
                kernels.conv2d_backward_input(g, w.data, x.data.shape, stride, padding)
            )
        if w.requires_grad:
            w.accumulate_grad(
                kernels.conv2d_backward_kernel(g, x.data, w.data.shape, stride, padding)
            )

    return make_op(out, (x, w), backward)


def depthwise_conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    out = kernels.depthwise_conv2d_forward(x.data, w.data, stride, padding)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(
                kernels.depthwise_conv2d_backward_input(g, w.data, x.data.shape, stride, padding)
            )
        if w.requires_grad:
            w.accumulate_grad(
                kernels.depthwise_conv2d_backward_kernel(g, x.data, w.data.shape, stride, padding)
            )

    return make_op(out, (x, w), backward)


def maxpool2x2(x: Tensor) -> Tensor:
    out, idx = kernels.maxpool2x2_forward(x.data)

    def backward(g):
        x.accumulate_grad(kernels.maxpool2x2_backward(g, idx, x.data.shape))

    return make_op(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N,C), mean over the spatial plane."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool expects 4-D input, got {x.data.ndim}-D")
    n, c, h, w = x.data.shape
    out = (_sum64(x.data, axis=(2, 3)) / (h * w)).astype(x.data.dtype)

    def backward(g):
        gx = np.broadcast_to(
            (g / x.data.dtype.type(h * w))[:, :, None, None], x.data.shape
        )
        x.accumulate_grad(np.ascontiguousarray(gx))

    return make_op(out, (x,), backward)


def activate(kind: act.ActivationKind, x: Tensor) -> Tensor:
    out = act.forward(kind, x.data)

    def backward(g):
        x.accumulate_grad(g * act.derivative(kind, x.data))

    return make_op(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    return activate(act.RELU, x)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate == 0.0:
        return x
    keep = (rng.random(size=x.data.shape) >= rate)
    m = keep.astype(x.data.dtype) / x.data.dtype.type(1.0 - rate)
    out = x.data * m

    def backward(g):
        x.accumulate_grad(g * m)

    return make_op(out, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Row-stable softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = (e / _sum64(e, axis=-1, keepdims=True)).astype(x.data.dtype)

    def backward(g):
        dot = _sum64(g * out, axis=-1, keepdims=True).astype(x.data.dtype)
        x.accumulate_grad((g - dot) * out)

    return make_op(out, (x,), backward)


def label_smoothed_cross_entropy(logits: Tensor, labels: np.ndarray, smoothing: float) -> Tensor:
    """Mean cross-entropy against (1-s)*onehot + s/C targets.

    ``labels`` are integer class ids of shape (N,).  The scalar loss is
    accumulated in float64 and returned in the logits dtype.
    """
    if not (0.0 <= smoothing < 1.0):
        raise ShapeError(f"smoothing must lie in [0,1), got {smoothing}")
    z = logits.data
    if z.ndim != 2:
        raise ShapeError(f"logits must be (N,C), got shape {z.shape}")
    n, c = z.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    lse = (zmax[:, 0].astype(np.float64) + np.log(_sum64(ez, axis=1)))
    logp = z.astype(np.float64) - lse[:, None]
    t = np.full((n, c), smoothing / c, dtype=np.float64)
    t[np.arange(n), labels] += 1.0 - smoothing
    loss64 = -(t * logp).sum() / n
    out = np.asarray(loss64, dtype=z.dtype)

    def backward(g):
        p = np.exp(logp)
        dz = ((p - t) * (float(g) / n)).astype(z.dtype)
        logits.accumulate_grad(dz)

    return make_op(out, (logits,), backward)


def fold_bn_stats(gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray,
                  running_var: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """(scale, shift) of the inference affine y = x*scale + shift.

    Both the eval-mode batch_norm op and the exported inference graph
    go through this helper, so their arithmetic is identical bit for
    bit.
    """
    dtype = gamma.dtype
    s = (gamma / np.sqrt(running_var + dtype.type(eps))).astype(dtype)
    b = (beta - running_mean * s).astype(dtype)
    return s, b


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization for (N,C) or (N,C,H,W) inputs.

    Training mode normalizes with biased batch statistics and updates
    the running stats in place with an exponential moving average
    (new = momentum*old + (1-momentum)*batch).  Eval mode applies the
    affine form y = x*s + b with s, b precomputed from the running
    stats -- the exact arithmetic the exported inference graph uses.
    """
    nd = x.data.ndim
    if nd == 2:
        axes, bshape = (0,), (1, -1)
    elif nd == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    else:
        raise ShapeError(f"batch_norm expects 2-D or 4-D input, got {nd}-D")
    dtype = x.data.dtype
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"gamma/beta must be shape ({c},)")

    if not training:
        s, b = fold_bn_stats(gamma.data, beta.data, running_mean, running_var, eps)
        out = x.data * s.reshape(bshape) + b.reshape(bshape)

        def backward_eval(g):
            if x.requires_grad:
                x.accumulate_grad(g * s.reshape(bshape))
            if gamma.requires_grad:
                rs = 1.0 / np.sqrt(running_var.astype(np.float64) + eps)
                xc = x.data.astype(np.float64) - running_mean.reshape(bshape)
                gamma.accumulate_grad(
                    (_sum64(g * xc * rs.reshape(bshape), axis=axes)).astype(dtype)
                )
            if beta.requires_grad:
                beta.accumulate_grad(_sum64(g, axis=axes).astype(dtype))

        return make_op(out, (x, gamma, beta), backward_eval)

    m = x.data.size // c
    mean = (_sum64(x.data, axis=axes) / m).astype(dtype)
    xc = x.data - mean.reshape(bshape)
    var = (_sum64(xc * xc, axis=axes) / m).astype(dtype)
    inv = (1.0 / np.sqrt(var + dtype.type(eps))).astype(dtype)
    xhat = xc * inv.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    running_mean *= dtype.type(momentum)
    running_mean += dtype.type(1.0 - momentum) * mean
    running_var *= dtype.type(momentum)
    running_var += dtype.type(1.0 - momentum) * var

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad(_sum64(g * xhat, axis=axes).astype(dtype))
        if beta.requires_grad:
            beta.accumulate_grad(_sum64(g, axis=axes).astype(dtype))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(bshape)
            s1 = _sum64(dxhat, axis=axes).astype(dtype).reshape(bshape)
            s2 = _sum64(dxhat * xhat, axis=axes).astype(dtype).reshape(bshape)
            gx = (inv.reshape(bshape) / dtype.type(m)) * (
                dtype.type(m) * dxhat - s1 - xhat * s2
            )
            x.accumulate_grad(gx.astype(dtype, copy=False))

    return make_op(out, (x, gamma, beta), backward)
