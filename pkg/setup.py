#!/usr/bin/env python
import setuptools

setuptools.setup(
    name="qfces",
    version="0.1.0",
    description="query-focused comparative summaries of e-commerce products, with LLM judges",
    long_description=open("README.rst").read(),
    license="MIT",
    classifiers=[
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
    ],
    packages=["qfces"],
    package_data={"qfces": ["templates/*.txt"]},
    python_requires=">=3.7",
    install_requires=[
        "effect>=1.1.0",
        "attrs",
        "numpy",
        "scipy",
        "httpx",
        "jinja2",
        "krippendorff",
    ],
    entry_points={"console_scripts": ["qfces = qfces.cli:main"]},
)
