"""Polynomial first integrals of 2-D geodesic flows."""

from geoflow._geoflow import (
    Example,
    Expr,
    Metric2D,
    commutator,
    eigenvalues,
    examples,
    quasi_linear_matrix,
    riemann_invariants_n2,
    sample_points,
    symmetry_equations,
    symmetry_matrix,
)

__all__ = [
    "Example",
    "Expr",
    "Metric2D",
    "commutator",
    "eigenvalues",
    "examples",
    "quasi_linear_matrix",
    "riemann_invariants_n2",
    "sample_points",
    "symmetry_equations",
    "symmetry_matrix",
]
