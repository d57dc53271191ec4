"""Figure rendering for meanfield-lab experiment outputs."""

__version__ = "0.1.0"
