from setuptools import setup, find_packages

setup(
    name="fedct-sim",
    version="0.1.0",
    description="Deterministic simulator for federated cross-training with consistency-aware knowledge broadcasting",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24.0",
        "pydantic>=2.0.0",
        "pyyaml>=6.0",
        "pandas>=1.5.0",
        "scipy>=1.10.0",
        "tqdm>=4.64.0",
    ],
    extras_require={
        "test": ["torch>=2.0.0"],  # independent autograd oracle
    },
    entry_points={
        "console_scripts": [
            "fedct-sim=fedct_sim.runtime.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
    python_requires=">=3.8",
)
