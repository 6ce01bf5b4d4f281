import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = cythonize(
    [
        Extension(
            "ilmtour._core",
            ["src/ilmtour/_core.pyx"],
            extra_compile_args=["-O3"],
            include_dirs=[numpy.get_include()],
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)
