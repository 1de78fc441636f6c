"""Build script: compiles the optional fast-kernel extension.

The package works without the extension (a pure-Python mirror is selected
at import time); set DEGF_SKIP_EXT=1 to skip compilation entirely.
-ffp-contract=off is required: FMA contraction would change rounding and
break bit-equality between the compiled and pure kernels.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DEGF_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "degf._kernels",
                    ["src/degf/_kernels.pyx"],
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
