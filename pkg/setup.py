from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "wia.evolve._kernel",
        ["src/wia/evolve/_kernel.pyx"],
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
