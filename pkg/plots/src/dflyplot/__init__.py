"""Offline figure generation from simulator run CSVs."""

__version__ = "0.1.0"
