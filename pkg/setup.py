"""Build script for the compiled distance kernels.

The extension is optional: if no C toolchain is available the package
installs anyway and the numpy fallback in ``cot2.retrieval`` takes over.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "cot2._distance",
                ["src/cot2/_distance.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
