"""Build script: compiles the optional accelerated kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); set EAUCAL_NO_EXT=1 to skip compilation.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("EAUCAL_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "eaucal.kernels._ckernels",
                    ["src/eaucal/kernels/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
