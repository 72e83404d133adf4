"""Build script for the optional compiled convolution/pooling kernels.

The package is pure Python plus one Cython extension holding the hot
loops (conv2d, depthwise conv2d, 2x2 max pooling).  The extension is
marked optional: if it fails to build or import, `pea.kernels` falls
back to the NumPy implementations transparently.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext = Extension(
    "pea.kernels._compiled",
    ["src/pea/kernels/_compiled.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
    optional=True,
)

setup(
    ext_modules=cythonize(
        [ext], compiler_directives={"language_level": "3"}
    )
    if cythonize is not None
    else [],
)
