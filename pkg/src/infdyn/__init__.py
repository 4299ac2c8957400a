"""Exact dynamics on infinite staircases and wind-tree tables."""

__version__ = "0.1.0"
