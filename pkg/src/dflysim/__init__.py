"""Deterministic flit-level Dragonfly network simulator."""

__version__ = "0.1.0"
