"""Simulation and verification tools for coalescing-fragmentating particle dynamics."""

__version__ = "0.1.0"
