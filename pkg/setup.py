import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="pymanreach",
    version="0.1.0",
    description="Guaranteed reachable sets of unknown control-affine systems on Riemannian manifolds.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="<>",
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
        'matplotlib',
        'seaborn',
        'sympy',
        "pymlg @ git+https://github.com/decargroup/pymlg@main",
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': [
            'pymanreach=pymanreach.cli:main',
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
)
