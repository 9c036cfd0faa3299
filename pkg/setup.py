import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python fallback is selected at import time
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("SIGVER_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "sigver.dtw._core",
                ["src/sigver/dtw/_core.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math / fp contraction: results must match the fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
