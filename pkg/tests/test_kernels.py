"""Cross-backend agreement of the conv/pool kernels.

The compiled and python backends must agree to float rounding on every
op, both dtypes, across strides and paddings; pooling must agree
bit-exactly (same first-max tie convention).
"""

import numpy as np
import pytest

from pea import kernels
from pea.kernels import python as pk

try:
    ck = kernels.get_backend("compiled")
    HAVE_COMPILED = True
except Exception:
    HAVE_COMPILED = False

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="extension not built")

GEOMS = [
    ((2, 3, 8, 8), (4, 3, 3, 3), 1, 1),
    ((2, 3, 8, 8), (4, 3, 3, 3), 2, 1),
    ((1, 2, 7, 9), (3, 2, 3, 3), 2, 0),
    ((2, 1, 5, 5), (2, 1, 1, 1), 1, 0),
    ((1, 4, 6, 6), (5, 4, 5, 5), 1, 2),
    ((2, 2, 6, 6), (3, 2, 2, 2), 3, 1),
]


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("xs,ws,stride,pad", GEOMS)
class TestConvBackendAgreement:
    def _tol(self, dtype):
        return 1e-4 if dtype == np.float32 else 1e-10

    def test_forward_and_backward(self, xs, ws, stride, pad, dtype, rng):
        x = rng.standard_normal(xs).astype(dtype)
        w = rng.standard_normal(ws).astype(dtype)
        yp = pk.conv2d_forward(x, w, stride, pad)
        yc = ck.conv2d_forward(x, w, stride, pad)
        assert np.abs(yp - yc).max() <= self._tol(dtype)
        gy = rng.standard_normal(yp.shape).astype(dtype)
        np.testing.assert_allclose(
            pk.conv2d_backward_input(gy, w, xs, stride, pad),
            ck.conv2d_backward_input(gy, w, xs, stride, pad), atol=self._tol(dtype))
        np.testing.assert_allclose(
            pk.conv2d_backward_kernel(gy, x, ws, stride, pad),
            ck.conv2d_backward_kernel(gy, x, ws, stride, pad), atol=10 * self._tol(dtype))


@needs_compiled
class TestDepthwiseAndPoolAgreement:
    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
    def test_depthwise(self, stride, pad, rng):
        x = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
        w = rng.standard_normal((4, 1, 3, 3)).astype(np.float32)
        yp = pk.depthwise_conv2d_forward(x, w, stride, pad)
        yc = ck.depthwise_conv2d_forward(x, w, stride, pad)
        np.testing.assert_allclose(yp, yc, atol=1e-5)
        gy = rng.standard_normal(yp.shape).astype(np.float32)
        np.testing.assert_allclose(
            pk.depthwise_conv2d_backward_input(gy, w, x.shape, stride, pad),
            ck.depthwise_conv2d_backward_input(gy, w, x.shape, stride, pad), atol=1e-5)
        np.testing.assert_allclose(
            pk.depthwise_conv2d_backward_kernel(gy, x, w.shape, stride, pad),
            ck.depthwise_conv2d_backward_kernel(gy, x, w.shape, stride, pad), atol=1e-4)

    def test_maxpool_bit_exact_including_ties(self, rng):
        x = rng.integers(0, 3, size=(3, 2, 8, 8)).astype(np.float32)  # many ties
        yp, ip = pk.maxpool2x2_forward(x)
        yc, ic = ck.maxpool2x2_forward(x)
        np.testing.assert_array_equal(yp, yc)
        np.testing.assert_array_equal(ip, ic)
        gy = rng.standard_normal(yp.shape).astype(np.float32)
        np.testing.assert_array_equal(
            pk.maxpool2x2_backward(gy, ip, x.shape),
            ck.maxpool2x2_backward(gy, ic, x.shape))


class TestDispatch:
    def test_selection_covers_every_op(self):
        assert set(kernels.SELECTION) == {
            "conv2d_forward", "conv2d_backward_input", "conv2d_backward_kernel",
            "depthwise_conv2d_forward", "depthwise_conv2d_backward_input",
            "depthwise_conv2d_backward_kernel", "maxpool2x2_forward",
            "maxpool2x2_backward",
        }
        assert set(kernels.SELECTION.values()) <= {"python", "compiled"}

    def test_run_to_run_determinism(self, rng):
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        a = kernels.conv2d_forward(x, w, 1, 1)
        b = kernels.conv2d_forward(x.copy(), w.copy(), 1, 1)
        np.testing.assert_array_equal(a, b)
