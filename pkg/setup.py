"""Build script.

The compiled kernel extension is optional: if Cython (or a C compiler) is
unavailable the package installs with the pure-numpy kernel backend only.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("CHOLDIFF_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "choldiff.kernels._compiled",
                    ["src/choldiff/kernels/_compiled.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
