"""Oriented talweg analysis of smooth sweeping processes."""

__version__ = "0.1.0"
