"""Compactly supported Gaussian-process emulators for large computer experiments."""

__version__ = "0.1.0"
