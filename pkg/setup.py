from setuptools import find_packages, setup

setup(
    name="qkern",
    version="0.1.0",
    packages=find_packages(include=["src", "src.*"]),
    install_requires=["PyYAML", "numpy>=1.22", "scipy>=1.8", "scikit-learn>=1.0"],
    extras_require={"test": ["pytest>=7.0"]},
    entry_points={"console_scripts": ["qkern=src.cli:main"]},
)
