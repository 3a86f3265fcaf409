"""Numerical laboratory for random lattice Schrödinger operators whose
disorder lives on a trimmed sublattice."""

__version__ = "0.1.0"
