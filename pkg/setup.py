from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-python fallback is selected at import time in signray.qp_backend.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "signray._qp_impl",
                ["src/signray/_qp_impl.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
