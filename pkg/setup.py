"""Build hook for the optional compiled plant kernel.

The package works without it: ``tvcsim.kernels`` falls back to the pure
Python implementation when ``tvcsim._ckernel`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("TVCSIM_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pragma: no cover - build without Cython
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "tvcsim._ckernel",
                    ["src/tvcsim/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
