"""Exact computations with Breuil modules over totally ramified bases."""

__version__ = "0.1.0"
