"""Stable limit laws for heavy-tailed observables over random dynamical systems."""

__version__ = "0.1.0"
