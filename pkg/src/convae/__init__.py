"""Convolutive non-negative autoencoders for supervised source separation."""

__version__ = "0.1.0"
