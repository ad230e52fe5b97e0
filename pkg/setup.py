"""Build script for the optional compiled detection kernels.

The package is pure Python except for qbuffer._ckernels, a small Cython
extension holding the sequential hot loops of the detector model (dead-time
filtering, time-tag binning). If Cython or a C compiler is unavailable the
extension is skipped and qbuffer falls back to qbuffer._pykernels at import
time, with identical semantics.

Set QBUF_NO_EXT=1 to force a pure-Python build.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Downgrade extension build failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(f"warning: compiled kernels skipped ({exc}); "
              "falling back to pure-Python kernels")


ext_modules = []
if os.environ.get("QBUF_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("qbuffer._ckernels", ["src/qbuffer/_ckernels.pyx"])],
            language_level="3",
        )
    except ImportError:
        print("warning: Cython not available; building pure-Python only")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
