"""Vortex strings in the abelian Higgs model: lattice solvers and diagnostics."""

__version__ = "0.1.0"
