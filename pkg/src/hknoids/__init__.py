"""Numerical conjugate-Plateau construction of genus-one CMC surfaces in H^2 x R."""

__version__ = "0.1.0"
