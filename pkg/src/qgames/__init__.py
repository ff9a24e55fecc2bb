"""Quantum non-local games: representations, value bounds across resource
classes, and pure-state convertibility checks."""

__version__ = "0.1.0"
