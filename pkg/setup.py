"""Build script. Compiles the optional Cython kernels; falls back to pure python.

The package works without the compiled extension (undephase._kernels); the
backend selector picks the numpy implementation when the import fails.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/undephase/_kernels.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        # -ffp-contract=off: no fused multiply-add, so the compiled kernels
        # are bit-identical to the numpy fallback
        ext.extra_compile_args.extend(["-O3", "-ffp-contract=off"])
except Exception as exc:  # missing cython or compiler: install pure-python only
    print(f"warning: building without compiled kernels ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
