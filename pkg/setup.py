"""Build script: compiles the optional kernel extension.

The extension is a pure speedup; when Cython or a C toolchain is
missing the package installs anyway and falls back to the NumPy
kernels.  Set LABGATE_NO_EXT=1 to skip the build explicitly.
FP contraction is disabled so rebuilds on the same toolchain
reproduce the same arithmetic.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LABGATE_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [Extension(
                "labgate._kernels",
                ["src/labgate/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )],
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
