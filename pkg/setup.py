from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    # optional=True: a failed compile falls back to the pure-numpy kernels
    # selected at import time in bioal.distance.
    ext_modules = cythonize(
        [
            Extension(
                "bioal._mindist",
                ["src/bioal/_mindist.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
