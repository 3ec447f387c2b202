"""Numerical tools for polynomial potentials and their semiclassical Witten Laplacians."""

from .poly import Polynomial
from .potential import Potential, phidelta, vdelta

__all__ = ["Polynomial", "Potential", "phidelta", "vdelta"]
__version__ = "0.1.0"
