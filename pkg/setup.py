"""Build script for the optional compiled kernels.

The package works without the extension (numpy fallbacks are selected at
import time); set AFFDEPTH_SKIP_NATIVE=1 to force a pure-Python install.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try to build the native kernels, fall back to pure Python on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"native kernels skipped ({exc}); using numpy fallbacks")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"native kernel {ext.name} skipped ({exc}); using numpy fallbacks")


ext_modules = []
if os.environ.get("AFFDEPTH_SKIP_NATIVE", "") not in ("1", "true"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "affdepth._native",
                    ["src/affdepth/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        print("Cython not available; installing with numpy fallback kernels")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
