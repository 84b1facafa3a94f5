"""Semiclassical solver for a coupled Schrodinger-Maxwell system on bounded domains."""

__version__ = "0.1.0"
