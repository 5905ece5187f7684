"""Quasi-particle construction for weakly perturbed quantum lattice models."""

__version__ = "0.1.0"
