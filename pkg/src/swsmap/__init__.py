"""Shear-wave-speed mapping from displacement volumes."""

__version__ = "0.1.0"
