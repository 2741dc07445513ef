"""Simulation laboratory for constrained stochastic reaction-diffusion equations."""

__version__ = "0.1.0"
