"""Simulation and numerical checks for additive martingales on random binary trees."""

__version__ = "0.1.0"
