import setuptools

with open("README.rst", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="globalhash",
    version="0.1.0",
    author="globalhash developers",
    description="Binary hashing for nearest neighbor search with distance-to-satellite codes",
    long_description=long_description,
    long_description_content_type="text/x-rst",
    classifiers=[
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
        "Natural Language :: English",
        "Topic :: Scientific/Engineering :: Information Analysis",
    ],
    packages=setuptools.find_packages(exclude=["tests"]),
    install_requires=[
        "numpy>=2.0",
        "scipy>=1.11",
        "pydantic>=2.4.2",
        "python-dotenv~=1.0.0",
    ],
    entry_points={"console_scripts": ["globalhash=globalhash.cli:main"]},
    python_requires=">=3.10",
)
