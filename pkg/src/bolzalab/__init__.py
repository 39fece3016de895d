"""Numerical laboratory for the twisted Laplacian on the Bolza surface."""

__version__ = "0.1.0"
