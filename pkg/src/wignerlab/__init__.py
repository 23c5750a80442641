"""Finite-rank deformations of Wigner matrices: sampling, outliers and their fluctuation laws."""

__version__ = "0.1.0"
