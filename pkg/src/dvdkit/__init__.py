"""Toy-scale decoupled vision-language serving and training kit."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
