from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # numpy kernels are used when the extension is absent
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "afdetect.autodiff._ckernels",
                ["src/afdetect/autodiff/_ckernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
