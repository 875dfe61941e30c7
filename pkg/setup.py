from setuptools import setup, find_packages

setup(
    name="mg-planner",
    version="1.0.0",
    author="MG Planner Team",
    description="Microgrid expansion planning with robust and chance-constrained load scenarios",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["examples", "examples.*"]),
    install_requires=[
        "numpy>=1.21.0",
        "pandas>=1.5.0",
        "scipy>=1.9.0",
        "cvxpy>=1.3.0",
        "dataclasses-json>=0.5.7",
        "python-dotenv>=0.19.0",
    ],
    extras_require={
        "cbc": ["mip>=1.15.0"],
        "test": ["pytest>=7.0.0"],
    },
    entry_points={
        "console_scripts": [
            "mg-planner=mg_planner.cli:main",
        ],
    },
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
)
