"""Spatial-temporal graph convolutional networks for sign recognition."""

__version__ = "0.1.0"
