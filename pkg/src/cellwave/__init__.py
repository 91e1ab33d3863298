"""Numerical wavelet analysis on the unit cube and plane-complement domains."""

from .errors import CellwaveError
from .grid import DyadicCube, GridFunction, SpaceParams

__all__ = ["CellwaveError", "DyadicCube", "GridFunction", "SpaceParams"]
__version__ = "0.1.0"
