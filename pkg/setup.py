"""Build script: compiles the Cython kernel extension when possible.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import warnings

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "imagedx.nn._ckernels",
                ["src/imagedx/nn/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # Cython or numpy missing: install pure-python only
    warnings.warn(f"building without compiled kernels: {exc}")
    extensions = []

setup(ext_modules=extensions)
