"""Trace-based probabilistic programming with exact and subsampled MH."""

__version__ = "0.1.0"

from austere.errors import AustereError

__all__ = ["AustereError", "__version__"]
