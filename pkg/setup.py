import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PREVBOUNDS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "prevbounds._kernels",
                    ["src/prevbounds/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # numpy fallback in prevbounds._pykernels is used at import
        ext_modules = []

setup(ext_modules=ext_modules)
