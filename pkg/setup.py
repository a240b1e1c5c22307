import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; nesslab falls back at import
    cythonize = None

NUMPY_RANDOM_LIB = os.path.join(os.path.dirname(np.__file__), "random", "lib")

ext_modules = []
if cythonize is not None and not os.environ.get("NESSLAB_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "nesslab._kernels",
                ["src/nesslab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                library_dirs=[NUMPY_RANDOM_LIB],
                libraries=["npyrandom"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
