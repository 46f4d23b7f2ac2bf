"""Build the optional Cython kernels; the package falls back to numpy without them."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ACTION_IMAGES_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "action_images._ckernels",
                    ["src/action_images/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
