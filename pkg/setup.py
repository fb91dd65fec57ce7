import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

version = {}
with open(r"bilocaltk/version.py") as fp:
    exec(fp.read(), version)

with open("requirements.txt", "r") as fh:
    install_requires = [line.strip() for line in fh if line.strip()]

setuptools.setup(
    name="bilocaltk",
    version=version["__version__"],
    description="Simulation and analysis toolkit for bilocality tests in a two-source quantum network",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests"]),
    install_requires=install_requires,
    entry_points={"console_scripts": ["bilocaltk=bilocaltk.main:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
)
