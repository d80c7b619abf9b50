"""Build hook for the optional compiled trajectory kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy kernel at import time.
"""
import numpy as np
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "seqdet._sme_kernel",
                ["src/seqdet/_sme_kernel.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
