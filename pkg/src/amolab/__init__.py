"""Numerical laboratory for the almost Mathieu operator at rational and Liouville frequencies."""

__version__ = "0.1.0"
