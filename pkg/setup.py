"""Build script: compiles the optional Cython kernel lane.

The package works without the extension (numpy fallback is selected at
import time), so a failed build is tolerated rather than fatal.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "vqalite.kernels._convkern",
                ["src/vqalite/kernels/_convkern.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - build-env dependent
    print(f"vqalite: Cython/NumPy unavailable ({exc}); building pure-python only")

setup(ext_modules=ext_modules)
