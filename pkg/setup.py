"""Build script for the compiled assignment-pool kernel.

The package works without the extension (a NumPy fallback is selected at
import time), but the compiled kernel is roughly an order of magnitude
faster on the rerandomization hot loop. Set TARGETBALANCE_SKIP_EXT=1 to
install without attempting the build.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("TARGETBALANCE_SKIP_EXT"):
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "targetbalance._kernel",
                ["src/targetbalance/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-funroll-loops"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
