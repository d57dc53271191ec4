"""Numerical laboratory for mean-field limits of interacting particle systems."""

__version__ = "0.1.0"
