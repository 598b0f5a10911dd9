import numpy
from setuptools import Extension, setup

# The compiled integrator core is optional: the package falls back to the
# pure-python engine when the extension is unavailable.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "crcontrol._engine_cy",
                ["src/crcontrol/_engine_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
