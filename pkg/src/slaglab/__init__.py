"""Numerical toolkit for gluing special Lagrangian tori along Lawlor necks."""

__version__ = "0.1.0"
