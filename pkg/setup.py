from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels are an optional fast path; bufsgd._kernels falls back
# to the numpy implementation when the extension is missing.
extensions = [
    Extension(
        "bufsgd._kernels._compiled",
        ["src/bufsgd/_kernels/_compiled.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
