"""Constrained control allocation and load-alleviation simulation for a
distributed morphing wing."""

__version__ = "0.1.0"
