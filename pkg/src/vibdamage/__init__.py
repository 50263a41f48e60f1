"""Vibration-based damage identification for a cantilever beam."""

__version__ = "0.1.0"
