"""
Setup script for prenetctl CLI tool
"""

from setuptools import setup, find_packages

setup(
    name="prenetctl",
    version="0.1.0",
    description="Progressive recurrent image deraining (PRN / PReNet) on a numpy autograd core",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "click>=8.0.0",
        "numpy>=1.24",
        "scipy>=1.10",
        "pillow>=10.0",
        "psutil>=5.9",
    ],
    entry_points={
        'console_scripts': [
            'prenetctl=prenetctl.cli:main',
        ],
    },
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Image Processing",
    ],
)
