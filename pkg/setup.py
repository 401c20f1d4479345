"""Builds the optional Cython reachability kernel.

If Cython or a C compiler is missing the package still installs and
``tsorobust.kernel`` falls back to the pure-Python implementation.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/tsorobust/_kernel.pyx"],
        compiler_directives={"language_level": "3"},
        quiet=True,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"tsorobust: building without compiled kernel ({exc})")

setup(ext_modules=ext_modules)
