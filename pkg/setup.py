"""Build the optional compiled kernels; the package still works without them."""
import os

from setuptools import setup, Extension

ext_modules = []
if os.environ.get("HOILAB_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext = Extension("hoilab._kernels", ["src/hoilab/_kernels.pyx"],
                        include_dirs=[np.get_include()],
                        extra_compile_args=["-O3"],
                        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])
        ext_modules = cythonize([ext], language_level=3, quiet=True)

setup(ext_modules=ext_modules)
