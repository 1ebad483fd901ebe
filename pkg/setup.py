import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "msprompt._kernels",
        ["src/msprompt/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        # no -ffast-math / FMA contraction: output must match the numpy fallback bit for bit.
        # -fno-trapping-math only lets branchy loops vectorize; it does not change rounding.
        extra_compile_args=["-O3", "-ffp-contract=off", "-fno-trapping-math"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
