"""Pointer-based CAD command sequences: codec, grammar, kernel, metrics."""

__version__ = "0.1.0"
