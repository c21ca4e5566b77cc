"""Build script.

The compiled kernel module is optional: when Cython or a C compiler is
unavailable the package installs in pure-Python mode and selects the
NumPy fallback at import time. Set DRIFTSURV_NO_EXT=1 to skip the
extension build entirely.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that degrades to a pure-Python install on compile failure."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:  # compiler missing, headers missing, ...
            self._warn(exc)

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print("WARNING: building the compiled kernels failed (%s); "
              "falling back to the pure-NumPy implementation." % (exc,))


ext_modules = []
cmdclass = {}
if not os.environ.get("DRIFTSURV_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "driftsurv._kernels_cy",
                    ["src/driftsurv/_kernels_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
        cmdclass["build_ext"] = optional_build_ext
    except ImportError as exc:
        print("WARNING: Cython/NumPy unavailable at build time (%s); "
              "installing without compiled kernels." % (exc,))

setup(ext_modules=ext_modules, cmdclass=cmdclass)
