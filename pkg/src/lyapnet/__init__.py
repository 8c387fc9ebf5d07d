"""Compositional neural-network Lyapunov functions for small-gain interconnections."""

__version__ = "0.1.0"
