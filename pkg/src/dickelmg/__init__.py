"""Finite-size Dicke-LMG spin-boson model: mean-field phases, exact diagonalization, dynamics."""

__version__ = "0.1.0"
