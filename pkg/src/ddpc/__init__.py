"""Data-driven predictive control from Hankel-matrix models of recorded I/O data."""

__version__ = "0.1.0"
