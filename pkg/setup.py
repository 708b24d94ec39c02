"""Build the optional Cython kernel core.

The pure-Python fallback in ``covshift._fallback`` is used whenever the
extension is missing, so a failed compile degrades to a slower but
functional install.
"""
import os
import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None


PLAIN_ARGS = ["-O3"]


class OptionalBuildExt(build_ext):
    """Build the core if possible; retry with plain flags, then give up quietly."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            sys.stderr.write(f"covshift: skipping compiled core ({exc})\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
            return
        except Exception as exc:  # pragma: no cover
            sys.stderr.write(f"covshift: vectorized build of {ext.name} failed ({exc}); retrying\n")
        ext.extra_compile_args = PLAIN_ARGS + openmp
        ext.libraries = [lib for lib in ext.libraries if lib != "mvec"]
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            sys.stderr.write(f"covshift: skipping {ext.name} ({exc})\n")


openmp = [] if os.environ.get("COVSHIFT_NO_OPENMP") else ["-fopenmp"]
# -ffast-math lets gcc map the exp loops onto glibc's SIMD exp (libmvec); it
# is a compile flag only, so the shared object does not change the FPU mode
vector_args = ["-O3", "-ffast-math"]
if os.environ.get("COVSHIFT_NATIVE"):
    vector_args.append("-march=native")
libraries = ["mvec", "m"] if sys.platform.startswith("linux") else []
extensions = [
    Extension(
        "covshift._core",
        ["src/covshift/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=vector_args + openmp,
        extra_link_args=openmp,
        libraries=libraries,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize is not None
    else [],
    cmdclass={"build_ext": OptionalBuildExt},
)
