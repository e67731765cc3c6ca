"""Build script for the optional compiled kernels.

The extension is a plain Cython stack machine with no numpy C API usage,
so no include dirs are needed. If the build fails (no compiler, no Cython)
the package still installs and falls back to the pure-Python kernels at
import time. Set STORMEQ_NO_EXT=1 to skip the extension entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Degrade to the pure-Python kernels when compilation is impossible."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            f"stormeq: compiled kernels unavailable ({exc}); "
            "falling back to the pure-Python kernels"
        )


ext_modules = []
cmdclass = {}
if os.environ.get("STORMEQ_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("stormeq._ckernels", ["src/stormeq/_ckernels.pyx"])],
            language_level=3,
        )
        cmdclass["build_ext"] = optional_build_ext
    except ImportError:
        pass

setup(ext_modules=ext_modules, cmdclass=cmdclass)
