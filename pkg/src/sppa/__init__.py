"""Stochastic proximal point methods on geodesic metric spaces."""

__version__ = "0.1.0"
