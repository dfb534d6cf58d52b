"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-Python fallback is
selected at import time); building it just makes LCS and n-gram
counting fast enough for full-size benchmarks.
"""
import sys

from setuptools import Extension, setup


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("cureval: Cython not available, building without compiled kernels",
              file=sys.stderr)
        return []
    return cythonize(
        [
            Extension(
                "cureval.kernels._fast",
                ["src/cureval/kernels/_fast.pyx"],
                language="c++",
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=extensions())
