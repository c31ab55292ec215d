"""Numerical toolkit for quantum channels with memory."""

__version__ = "0.1.0"
