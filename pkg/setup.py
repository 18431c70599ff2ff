"""Build script for the optional compiled kernel core.

The package works without the extension: reenact.kernels falls back to its
NumPy implementation when the compiled module is absent.  Set
REENACT_SKIP_NATIVE=1 to install without attempting the build.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("REENACT_SKIP_NATIVE", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "reenact.kernels._native",
                    ["src/reenact/kernels/_native.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
