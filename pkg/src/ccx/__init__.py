"""Finite-sample workbench for coarsely convex spaces."""

__version__ = "0.1.0"
