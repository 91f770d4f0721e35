"""Setup script for the spatial MMSE speech enhancement system"""

from setuptools import setup

setup(
    name="spatial-mmse",
    version="1.0.0",
    description="Multichannel speech enhancement with Gaussian mixture noise models",
    author="Your Name",
    py_modules=[
        "analytics", "app", "config", "constants", "errors", "filters", "harness",
        "indexing", "logger", "metrics", "monitor", "noisemodel", "numerics",
        "processor", "spatial", "stft", "utils",
    ],
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "pydantic>=2.0.0",
        "soundfile",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["spatialmmse=app:main"]},
    python_requires=">=3.9",
)
