from setuptools import setup, find_packages

setup(
    name="sscm_spectra",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "numpy>=1.22.0",
        "scipy>=1.8.0",
        "pandas>=1.5.0",
        "PyYAML>=6.0.1",
    ],
    python_requires=">=3.8",
    entry_points={
        "console_scripts": [
            "sscm-spectra=sscm_spectra.main:main",
        ],
    },
)
