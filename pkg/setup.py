"""Build script: compiles the optional Cython kernel core.

The package works without the extension (austere.kernels falls back to the
pure-Python twin), so any build failure here is demoted to a warning.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/austere/_core.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    sys.stderr.write("cython core skipped: %s\n" % exc)

setup(ext_modules=ext_modules)
