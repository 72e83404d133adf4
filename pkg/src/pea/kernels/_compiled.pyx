# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled direct-loop kernels for conv2d, depthwise conv2d and 2x2 max pool.

Same contracts as :mod:`pea.kernels.python`: cross-correlation on NCHW
data, fixed reduction order (bit-deterministic run to run), float32 or
float64 via fused types.  Padding is handled by hoisting the valid
output range per kernel tap instead of materializing a padded copy, so
the innermost loops are branch-free.
"""

import numpy as np

cimport cython
from cython cimport floating

from .python import check_conv_geometry
from ..errors import ShapeError


cdef inline Py_ssize_t _lo(Py_ssize_t tap, Py_ssize_t padding, Py_ssize_t stride) noexcept nogil:
    # smallest output index r with r*stride + tap - padding >= 0
    if padding <= tap:
        return 0
    return (padding - tap + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t tap, Py_ssize_t padding, Py_ssize_t stride,
                           Py_ssize_t extent, Py_ssize_t out_extent) noexcept nogil:
    # largest output index r with r*stride + tap - padding <= extent-1
    cdef Py_ssize_t num = extent - 1 - tap + padding
    cdef Py_ssize_t hi
    if num < 0:
        return -1
    hi = num // stride
    if hi > out_extent - 1:
        hi = out_extent - 1
    return hi


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                   int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    if w.shape[1] != c:
        raise ShapeError(f"conv input has {c} channels but kernel expects {w.shape[1]}")
    oh, ow = check_conv_geometry(h, wd, kh, kw, stride, padding)
    cdef Py_ssize_t ohh = oh, oww = ow
    if floating is float:
        y_arr = np.zeros((n, f, ohh, oww), dtype=np.float32)
    else:
        y_arr = np.zeros((n, f, ohh, oww), dtype=np.float64)
    cdef floating[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t nn, ff, cc, i, j, r, q, ih, iw, r0, r1, q0, q1
    cdef floating wv
    with nogil:
        for nn in range(n):
            for ff in range(f):
                for cc in range(c):
                    for i in range(kh):
                        r0 = _lo(i, padding, stride)
                        r1 = _hi(i, padding, stride, h, ohh)
                        for j in range(kw):
                            q0 = _lo(j, padding, stride)
                            q1 = _hi(j, padding, stride, wd, oww)
                            wv = w[ff, cc, i, j]
                            for r in range(r0, r1 + 1):
                                ih = r * stride + i - padding
                                iw = q0 * stride + j - padding
                                for q in range(q0, q1 + 1):
                                    y[nn, ff, r, q] += wv * x[nn, cc, ih, iw]
                                    iw += stride
    return y_arr


def conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w,
                          x_shape, int stride, int padding):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ohh = gy.shape[2], oww = gy.shape[3]
    if floating is float:
        gx_arr = np.zeros((n, c, h, wd), dtype=np.float32)
    else:
        gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t nn, ff, cc, i, j, r, q, ih, iw, r0, r1, q0, q1
    cdef floating wv
    with nogil:
        for nn in range(n):
            for ff in range(f):
                for cc in range(c):
                    for i in range(kh):
                        r0 = _lo(i, padding, stride)
                        r1 = _hi(i, padding, stride, h, ohh)
                        for j in range(kw):
                            q0 = _lo(j, padding, stride)
                            q1 = _hi(j, padding, stride, wd, oww)
                            wv = w[ff, cc, i, j]
                            for r in range(r0, r1 + 1):
                                ih = r * stride + i - padding
                                iw = q0 * stride + j - padding
                                for q in range(q0, q1 + 1):
                                    gx[nn, cc, ih, iw] += wv * gy[nn, ff, r, q]
                                    iw += stride
    return gx_arr


def conv2d_backward_kernel(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] x,
                           w_shape, int stride, int padding):
    cdef Py_ssize_t f = w_shape[0], c = w_shape[1], kh = w_shape[2], kw = w_shape[3]
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t ohh = gy.shape[2], oww = gy.shape[3]
    if floating is float:
        gw_arr = np.zeros((f, c, kh, kw), dtype=np.float32)
    else:
        gw_arr = np.zeros((f, c, kh, kw), dtype=np.float64)
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t nn, ff, cc, i, j, r, q, ih, iw, r0, r1, q0, q1
    cdef floating acc
    with nogil:
        for ff in range(f):
            for cc in range(c):
                for i in range(kh):
                    r0 = _lo(i, padding, stride)
                    r1 = _hi(i, padding, stride, h, ohh)
                    for j in range(kw):
                        q0 = _lo(j, padding, stride)
                        q1 = _hi(j, padding, stride, wd, oww)
                        acc = 0
                        for nn in range(n):
                            for r in range(r0, r1 + 1):
                                ih = r * stride + i - padding
                                iw = q0 * stride + j - padding
                                for q in range(q0, q1 + 1):
                                    acc += gy[nn, ff, r, q] * x[nn, cc, ih, iw]
                                    iw += stride
                        gw[ff, cc, i, j] = acc
    return gw_arr


def depthwise_conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                             int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    if w.shape[0] != c or w.shape[1] != 1:
        raise ShapeError(
            f"depthwise kernel must be shaped ({c},1,kh,kw), got "
            f"({w.shape[0]},{w.shape[1]},{w.shape[2]},{w.shape[3]})")
    oh, ow = check_conv_geometry(h, wd, kh, kw, stride, padding)
    cdef Py_ssize_t ohh = oh, oww = ow
    if floating is float:
        y_arr = np.zeros((n, c, ohh, oww), dtype=np.float32)
    else:
        y_arr = np.zeros((n, c, ohh, oww), dtype=np.float64)
    cdef floating[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t nn, cc, i, j, r, q, ih, iw, r0, r1, q0, q1
    cdef floating wv
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for i in range(kh):
                    r0 = _lo(i, padding, stride)
                    r1 = _hi(i, padding, stride, h, ohh)
                    for j in range(kw):
                        q0 = _lo(j, padding, stride)
                        q1 = _hi(j, padding, stride, wd, oww)
                        wv = w[cc, 0, i, j]
                        for r in range(r0, r1 + 1):
                            ih = r * stride + i - padding
                            iw = q0 * stride + j - padding
                            for q in range(q0, q1 + 1):
                                y[nn, cc, r, q] += wv * x[nn, cc, ih, iw]
                                iw += stride
    return y_arr


def depthwise_conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w,
                                    x_shape, int stride, int padding):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ohh = gy.shape[2], oww = gy.shape[3]
    if floating is float:
        gx_arr = np.zeros((n, c, h, wd), dtype=np.float32)
    else:
        gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t nn, cc, i, j, r, q, ih, iw, r0, r1, q0, q1
    cdef floating wv
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for i in range(kh):
                    r0 = _lo(i, padding, stride)
                    r1 = _hi(i, padding, stride, h, ohh)
                    for j in range(kw):
                        q0 = _lo(j, padding, stride)
                        q1 = _hi(j, padding, stride, wd, oww)
                        wv = w[cc, 0, i, j]
                        for r in range(r0, r1 + 1):
                            ih = r * stride + i - padding
                            iw = q0 * stride + j - padding
                            for q in range(q0, q1 + 1):
                                gx[nn, cc, ih, iw] += wv * gy[nn, cc, r, q]
                                iw += stride
    return gx_arr


def depthwise_conv2d_backward_kernel(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] x,
                                     w_shape, int stride, int padding):
    cdef Py_ssize_t c = w_shape[0], kh = w_shape[2], kw = w_shape[3]
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t ohh = gy.shape[2], oww = gy.shape[3]
    if floating is float:
        gw_arr = np.zeros((c, 1, kh, kw), dtype=np.float32)
    else:
        gw_arr = np.zeros((c, 1, kh, kw), dtype=np.float64)
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t nn, cc, i, j, r, q, ih, iw, r0, r1, q0, q1
    cdef floating acc
    with nogil:
        for cc in range(c):
            for i in range(kh):
                r0 = _lo(i, padding, stride)
                r1 = _hi(i, padding, stride, h, ohh)
                for j in range(kw):
                    q0 = _lo(j, padding, stride)
                    q1 = _hi(j, padding, stride, wd, oww)
                    acc = 0
                    for nn in range(n):
                        for r in range(r0, r1 + 1):
                            ih = r * stride + i - padding
                            iw = q0 * stride + j - padding
                            for q in range(q0, q1 + 1):
                                acc += gy[nn, cc, r, q] * x[nn, cc, ih, iw]
                                iw += stride
                    gw[cc, 0, i, j] = acc
    return gw_arr


def maxpool2x2_forward(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    if h % 2 or wd % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{wd}")
    cdef Py_ssize_t oh = h // 2, ow = wd // 2
    if floating is float:
        y_arr = np.empty((n, c, oh, ow), dtype=np.float32)
    else:
        y_arr = np.empty((n, c, oh, ow), dtype=np.float64)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef floating[:, :, :, ::1] y = y_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t nn, cc, r, q, di, dj, k, best_k
    cdef floating v, best
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for r in range(oh):
                    for q in range(ow):
                        best = x[nn, cc, 2 * r, 2 * q]
                        best_k = 0
                        k = 0
                        for di in range(2):
                            for dj in range(2):
                                v = x[nn, cc, 2 * r + di, 2 * q + dj]
                                if v > best:
                                    best = v
                                    best_k = k
                                k += 1
                        y[nn, cc, r, q] = best
                        idx[nn, cc, r, q] = best_k
    return y_arr, idx_arr


def maxpool2x2_backward(floating[:, :, :, ::1] gy, long long[:, :, :, ::1] idx, x_shape):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3]
    cdef Py_ssize_t oh = h // 2, ow = wd // 2
    if floating is float:
        gx_arr = np.zeros((n, c, h, wd), dtype=np.float32)
    else:
        gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t nn, cc, r, q, k
    with nogil:
        for nn in range(n):
            for cc in range(c):
                for r in range(oh):
                    for q in range(ow):
                        k = idx[nn, cc, r, q]
                        gx[nn, cc, 2 * r + k // 2, 2 * q + k % 2] = gy[nn, cc, r, q]
    return gx_arr
