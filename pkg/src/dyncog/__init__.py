"""Textual cognitive maps and dynamic-scene benchmark tooling for RGB-D video."""

__version__ = "0.1.0"
