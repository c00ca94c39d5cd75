"""Glove-driven intent estimation, prediction and closed-loop control of a
simulated multi-fingered hand."""

__version__ = "0.1.0"
