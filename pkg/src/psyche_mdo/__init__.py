"""Coupled low-thrust trajectory and solar-array sizing optimisation."""

__version__ = "0.1.0"
