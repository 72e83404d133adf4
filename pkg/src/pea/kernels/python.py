"""NumPy reference kernels for the convolution/pooling hot loops.

These back the pure-Python path of :mod:`pea.kernels`.  Convolutions
use sliding-window views plus tensordot/einsum (i.e. BLAS), so this
path is fast enough for desk-scale training even without the compiled
extension.  Reduction order is fixed by the chosen contractions, so
repeated runs are bit-identical; results may differ from the compiled
backend in the last float bit because the two sum in different orders.

All convolutions use cross-correlation semantics on NCHW data with
OIHW kernels.  Output spatial size is floor((H + 2p - kh)/stride) + 1.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigError, ShapeError


def check_conv_geometry(h, w, kh, kw, stride, padding):
    if not (isinstance(stride, int) and stride >= 1):
        raise ConfigError(f"stride must be a positive integer, got {stride!r}")
    if not (isinstance(padding, int) and padding >= 0):
        raise ConfigError(f"padding must be a non-negative integer, got {padding!r}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(
            f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}"
        )
    return oh, ow


def _windows(xp: np.ndarray, kh, kw, stride, oh, ow) -> np.ndarray:
    """View of shape (N, C, OH, OW, kh, kw) over padded input."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp,
        shape=(n, c, oh, ow, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, w, stride, padding):
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv input has {c} channels but kernel expects {cw}")
    oh, ow = check_conv_geometry(h, wd, kh, kw, stride, padding)
    win = _windows(_pad(x, padding), kh, kw, stride, oh, ow)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, OH, OW, F)
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_backward_input(gy, w, x_shape, stride, padding):
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    oh, ow = gy.shape[2], gy.shape[3]
    t = np.tensordot(gy, w, axes=([1], [0]))  # (N, OH, OW, C, kh, kw)
    t = t.transpose(0, 3, 1, 2, 4, 5)  # (N, C, OH, OW, kh, kw)
    gxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += t[
                :, :, :, :, i, j
            ]
    if padding:
        return np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + wd])
    return gxp


def conv2d_backward_kernel(gy, x, w_shape, stride, padding):
    f, c, kh, kw = w_shape
    oh, ow = gy.shape[2], gy.shape[3]
    win = _windows(_pad(x, padding), kh, kw, stride, oh, ow)
    gw = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))  # (F, C, kh, kw)
    return np.ascontiguousarray(gw)


def depthwise_conv2d_forward(x, w, stride, padding):
    n, c, h, wd = x.shape
    cw, one, kh, kw = w.shape
    if cw != c or one != 1:
        raise ShapeError(
            f"depthwise kernel must be shaped ({c},1,kh,kw), got {tuple(w.shape)}"
        )
    oh, ow = check_conv_geometry(h, wd, kh, kw, stride, padding)
    win = _windows(_pad(x, padding), kh, kw, stride, oh, ow)
    y = np.einsum("nchwij,cij->nchw", win, w[:, 0], optimize=True)
    return np.ascontiguousarray(y)


def depthwise_conv2d_backward_input(gy, w, x_shape, stride, padding):
    n, c, h, wd = x_shape
    _, _, kh, kw = w.shape
    oh, ow = gy.shape[2], gy.shape[3]
    t = np.einsum("nchw,cij->nchwij", gy, w[:, 0], optimize=True)
    gxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += t[
                :, :, :, :, i, j
            ]
    if padding:
        return np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + wd])
    return gxp


def depthwise_conv2d_backward_kernel(gy, x, w_shape, stride, padding):
    c, one, kh, kw = w_shape
    oh, ow = gy.shape[2], gy.shape[3]
    win = _windows(_pad(x, padding), kh, kw, stride, oh, ow)
    gw = np.einsum("nchw,nchwij->cij", gy, win, optimize=True)
    return np.ascontiguousarray(gw[:, None, :, :])


def maxpool2x2_forward(x):
    """2x2 max pool, stride 2. Ties resolve to the first window element.

    Returns (pooled, flat_argmax) where flat_argmax indexes the 4
    window positions in row-major order and feeds the backward pass.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    oh, ow = h // 2, w // 2
    win = x.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    idx = np.argmax(win, axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx.astype(np.int64)


def maxpool2x2_backward(gy, idx, x_shape):
    n, c, h, w = x_shape
    oh, ow = h // 2, w // 2
    gwin = np.zeros((n, c, oh, ow, 4), dtype=gy.dtype)
    np.put_along_axis(gwin, idx[..., None], gy[..., None], axis=-1)
    gx = gwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return np.ascontiguousarray(gx)
