"""Generalized Gaussian source modelling and extended-zero-zone scalar quantization."""

__version__ = "0.1.0"
