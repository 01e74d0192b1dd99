"""Build script: compiles the optional Cython convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed extension build degrades to a warning rather
than aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "uttembed.kernels._convkern",
                ["src/uttembed/kernels/_convkern.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "nonecheck": False,
        },
    )
except Exception as exc:  # pragma: no cover - only hit on broken toolchains
    sys.stderr.write(
        f"warning: Cython kernels not built ({exc}); using numpy fallback\n"
    )

setup(ext_modules=ext_modules)
