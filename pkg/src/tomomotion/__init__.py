"""Rotational motion recovery for dynamic tomography."""

__version__ = "0.1.0"
