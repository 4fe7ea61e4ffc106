"""Build the optional compiled simulation kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it makes large Monte Carlo runs several times faster.
-ffp-contract=off keeps the compiled recursion bit-identical to the fallback.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "minrev._kernels",
        sources=["src/minrev/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
