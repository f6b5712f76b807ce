"""Shared algebraic building blocks: scalars, polynomials, truncated series."""
