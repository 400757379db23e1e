"""Approximately piecewise-Euclidean equivariant point networks."""

__version__ = "0.1.0"
