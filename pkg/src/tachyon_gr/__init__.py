"""Geodesics, weak fields and kinematic diagnostics for faster-than-light test particles."""

__version__ = "0.1.0"
