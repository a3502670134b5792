"""Build script for the compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed native build only costs speed, never correctness.

    python setup.py build_ext --inplace
"""

import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "trajfuse.kernels._native",
                ["src/trajfuse/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: keeps exact product-pair cancellation
                # (conj(q) * q == identity bitwise) and matches the numpy
                # backend's separately-rounded arithmetic
                extra_compile_args=(
                    [] if sys.platform == "win32" else ["-ffp-contract=off"]
                ),
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # Cython or compiler missing: ship pure python
    print(f"warning: native kernel build skipped ({exc})", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
