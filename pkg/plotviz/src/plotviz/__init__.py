"""Batch rendering of phasefix evaluation reports."""

__version__ = "0.1.0"
