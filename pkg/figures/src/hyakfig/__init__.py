"""Figures for hyaksim run directories, consumed via CSV only."""

__version__ = "0.1.0"
