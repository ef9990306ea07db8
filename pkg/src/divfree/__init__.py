"""Divergence-free approximation toolkit on discretized planar domains."""

from .fields import Grid, ScalarField, VectorField2

__all__ = ["Grid", "ScalarField", "VectorField2"]
__version__ = "0.1.0"
