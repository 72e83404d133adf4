"""Backend selection for the convolution/pooling hot loops.

Two interchangeable implementations exist:

* ``python`` -- NumPy sliding-window kernels (:mod:`pea.kernels.python`);
  the windows feed tensordot/einsum, i.e. BLAS GEMMs;
* ``compiled`` -- Cython direct loops (:mod:`pea.kernels._compiled`),
  no BLAS and no window materialization.

Which is faster depends on the op (measured in
``benchmarks/bench_kernels.py``): BLAS wins dense convolutions by a
wide margin, while the compiled loops win depthwise convolutions and
max pooling, where the NumPy path is dominated by window bookkeeping
rather than arithmetic.

Selection happens once at import time via ``PEA_KERNELS``:

* ``auto`` (default) -- dense conv2d on the python backend, depthwise
  conv and max pool on the compiled backend when the extension is
  available, python otherwise;
* ``python`` / ``compiled`` -- force one backend for every op
  (forcing ``compiled`` raises if the extension is missing).

``SELECTION`` maps each op to the backend actually chosen.  Every
choice is bit-deterministic run to run; the two backends are not
bit-identical to each other because they reduce in different orders.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ConfigError
from . import python as _python

try:
    from . import _compiled as _compiled
except ImportError:  # extension not built on this host
    _compiled = None

_OPS = (
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_kernel",
    "depthwise_conv2d_forward",
    "depthwise_conv2d_backward_input",
    "depthwise_conv2d_backward_kernel",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
)

# ops where the direct loops measure faster than the BLAS route
_COMPILED_WINS = (
    "depthwise_conv2d_forward",
    "depthwise_conv2d_backward_input",
    "depthwise_conv2d_backward_kernel",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
)

BACKEND = os.environ.get("PEA_KERNELS", "auto").strip().lower() or "auto"
if BACKEND not in ("auto", "python", "compiled"):
    raise ConfigError(f"PEA_KERNELS must be auto|python|compiled, got {BACKEND!r}")
if BACKEND == "compiled" and _compiled is None:
    raise ImportError(
        "PEA_KERNELS=compiled but the pea.kernels._compiled extension is not "
        "available; reinstall with a working C toolchain"
    )

SELECTION: dict[str, str] = {}
_table = {}
for _op in _OPS:
    if BACKEND == "python" or _compiled is None:
        chosen = "python"
    elif BACKEND == "compiled":
        chosen = "compiled"
    else:
        chosen = "compiled" if _op in _COMPILED_WINS else "python"
    SELECTION[_op] = chosen
    _table[_op] = getattr(_compiled if chosen == "compiled" else _python, _op)


def get_backend(name: str):
    """Return a whole kernel module by name ("python" or "compiled")."""
    if name == "python":
        return _python
    if name == "compiled":
        if _compiled is None:
            raise ConfigError("compiled kernel backend is not available")
        return _compiled
    raise ConfigError(f"unknown kernel backend {name!r}")


def _c4(a):
    return np.ascontiguousarray(a)


def conv2d_forward(x, w, stride, padding):
    return _table["conv2d_forward"](_c4(x), _c4(w), stride, padding)


def conv2d_backward_input(gy, w, x_shape, stride, padding):
    return _table["conv2d_backward_input"](_c4(gy), _c4(w), tuple(x_shape), stride, padding)


def conv2d_backward_kernel(gy, x, w_shape, stride, padding):
    return _table["conv2d_backward_kernel"](_c4(gy), _c4(x), tuple(w_shape), stride, padding)


def depthwise_conv2d_forward(x, w, stride, padding):
    return _table["depthwise_conv2d_forward"](_c4(x), _c4(w), stride, padding)


def depthwise_conv2d_backward_input(gy, w, x_shape, stride, padding):
    return _table["depthwise_conv2d_backward_input"](
        _c4(gy), _c4(w), tuple(x_shape), stride, padding
    )


def depthwise_conv2d_backward_kernel(gy, x, w_shape, stride, padding):
    return _table["depthwise_conv2d_backward_kernel"](
        _c4(gy), _c4(x), tuple(w_shape), stride, padding
    )


def maxpool2x2_forward(x):
    return _table["maxpool2x2_forward"](_c4(x))


def maxpool2x2_backward(gy, idx, x_shape):
    return _table["maxpool2x2_backward"](_c4(gy), _c4(idx), tuple(x_shape))


check_conv_geometry = _python.check_conv_geometry
