"""Deformable action-tube linking."""

__version__ = "0.1.0"
