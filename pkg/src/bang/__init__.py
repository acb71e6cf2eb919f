"""Bidirectional anchored sequence generation with a small numpy transformer."""

__version__ = "0.1.0"
