"""Simulation laboratory for hybrid mortality-surveillance sample designs."""

__version__ = "0.1.0"
