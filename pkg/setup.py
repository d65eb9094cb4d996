"""Build script for the compiled kernel extension.

The extension is optional: if Cython or a C compiler is unavailable the
install still succeeds and the package falls back to the NumPy kernels at
import time. Set LIDF_SKIP_EXT=1 to skip compilation entirely.
"""

import os

import numpy as np
from setuptools import setup

ext_modules = []
if not os.environ.get("LIDF_SKIP_EXT"):
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "lidf.kernels._ckernels",
                sources=["src/lidf/kernels/_ckernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(
    ext_modules=ext_modules,
    include_dirs=[np.get_include()],
)
