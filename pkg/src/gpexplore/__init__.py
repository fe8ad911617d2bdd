"""Gaussian-process occupancy mapping and information-driven exploration."""

__version__ = "0.1.0"
