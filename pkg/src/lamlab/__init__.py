"""Laminated lattice models: periodic ground states, contours, exact partition
functions and Monte Carlo for layered spin systems with a vertical Potts coupling."""

from .lattice import CapacityError, Configuration, Window

__all__ = ["CapacityError", "Configuration", "Window"]
