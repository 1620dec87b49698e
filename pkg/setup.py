"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback
with identical, bit-exact semantics is selected at import time); building
it makes the hardware-mode simulation loops roughly an order of magnitude
faster.  Build in place with:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "neurosoc._kernels._core",
                sources=["src/neurosoc/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
