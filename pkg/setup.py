"""Build script: compiles the optional Cython simulation core.

The compiled extension is a pure accelerator.  If Cython or a C compiler is
unavailable the install falls back to the NumPy kernels in
``kinetic_harris._backend.kernels_py`` (selected automatically at import).
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that degrades to a warning instead of failing the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            "could not build the compiled simulation core (%s); "
            "falling back to the pure-NumPy kernels" % exc,
            RuntimeWarning,
            stacklevel=0,
        )


def _extensions():
    if os.environ.get("KINETIC_HARRIS_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "kinetic_harris._backend.kernels_cy",
        ["src/kinetic_harris/_backend/kernels_cy.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
