#!/usr/bin/env python3
from setuptools import setup, find_packages

setup(
    name="visual-route-agents",
    version="0.1.0",
    description="Image-based multi-agent TSP/mTSP experiment harness with a reference solver and paired evaluation",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    package_data={"visual_route_agents": ["prompts/*.txt"]},
    include_package_data=True,
    install_requires=[
        "mcp[cli]>=1.9.1,<2",
        "openai>=1.30",
        "tenacity>=8.2",
        "python-dotenv>=1.0",
        "numpy>=1.24",
        "scipy>=1.15",
        "matplotlib>=3.7",
        "pandas>=2.0",
    ],
    extras_require={
        "dev": ["pytest>=7.4"],
    },
    entry_points={
        "console_scripts": [
            "vra=visual_route_agents.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.10",
)
