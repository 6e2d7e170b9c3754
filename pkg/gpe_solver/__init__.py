"""Finite-element ground states of rotating Bose-Einstein condensates."""

__version__ = "1.0.0"
