"""Planted two-layer networks with high-threshold activations and the
procedures that recover their first-layer weights from Gaussian samples."""

__version__ = "0.1.0"
