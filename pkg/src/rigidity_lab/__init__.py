"""Numerical checks of rigidity results for overdetermined and mixed problems in cones."""

__version__ = "0.1.0"
