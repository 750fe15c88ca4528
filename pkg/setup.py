from setuptools import Extension, setup

import numpy as np
from Cython.Build import cythonize

ext = Extension(
    "orowan._kernels._chain",
    ["src/orowan/_kernels/_chain.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    libraries=["m"],
)

setup(
    ext_modules=cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
            "embedsignature": True,
        },
    ),
)
