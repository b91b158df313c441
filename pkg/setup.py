from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the compiled kernels must not fuse multiply-adds, or
# their accumulation would diverge bit-wise from the NumPy backend.
ext = Extension(
    "doh.kernels._native",
    ["src/doh/kernels/_native.pyx"],
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
