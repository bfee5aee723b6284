"""Blade-soil force modeling, earthmoving simulation, and in-situ soil
parameter estimation from interaction forces."""

__version__ = "0.1.0"

from . import fee

__all__ = ["fee", "__version__"]
