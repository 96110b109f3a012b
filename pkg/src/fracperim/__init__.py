"""Nonlocal perimeters, truncated Riesz energies and their renormalizations on grids."""

__version__ = "0.1.0"
