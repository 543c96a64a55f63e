import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "shellray._kernels",
                ["src/shellray/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off: the pure-NumPy fallback must match the
                # compiled kernels bit for bit, so FMA contraction is disabled.
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython available: install pure-Python only, backend.py falls back.
    extensions = []

setup(ext_modules=extensions)
