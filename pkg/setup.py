from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        [Extension("minivella.vm._cvm", ["src/minivella/vm/_cvm.pyx"], extra_compile_args=["-O2"])],
        language_level=3,
    ),
)
