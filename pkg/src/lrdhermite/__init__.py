"""Weighted Hermite functionals of long-range dependent Gaussian fields."""

__version__ = "0.1.0"
