"""Simulation and verification of the point process of high local maxima of
smooth stationary Gaussian fields."""

__version__ = "0.1.0"
