"""Synthesis of transducers with a guided environment."""

__version__ = "0.1.0"
