"""Terrain survey -> safety labeling -> synthetic segmentation dataset ->
prediction post-processing pipeline."""

from .kernels import BACKEND, HAVE_COMPILED

__version__ = "0.1.0"

__all__ = ["BACKEND", "HAVE_COMPILED", "__version__"]
