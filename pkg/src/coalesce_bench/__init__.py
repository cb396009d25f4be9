"""Simulation and verification toolkit for three coalescing paths."""

__version__ = "0.1.0"
