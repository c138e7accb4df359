from setuptools import setup


with open('README.md', 'r') as file:
    long_description = file.read()

setup(
    name='lattice-echo',
    version='0.1.0',
    description='Simulates randomly perturbed lattices and recovers the lattice, '
                'offset and noise dispersion from a single realization.',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=['lattice_echo'],
    package_dir={'':'src'},
    include_package_data=True,
    package_data={'lattice_echo': ['data/*.cfg']},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.9',
    install_requires=[
        "pandas>=1.5.0",
        "numpy>=1.21.0",
        "scipy>=1.7.0",
        "joblib>=1.1.0",
        "threadpoolctl>=3.0.0",
    ],
    extras_require={
        "dev": [
            "pytest>=6.2.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "lattice-echo=lattice_echo.cli:main",
        ],
    },
)
