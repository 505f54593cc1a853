"""Exact finite-horizon laboratory for weighted dyadic ergodic averages."""

__version__ = "0.1.0"
