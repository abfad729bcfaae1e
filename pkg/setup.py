"""Build script for the optional compiled Monte Carlo kernel.

The package installs and runs without the extension (a numpy fallback is
selected at import time), so the extension is marked optional and any
compiler failure downgrades to the pure-Python build.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "gtmarkov._mc",
                sources=["src/gtmarkov/_mc.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
