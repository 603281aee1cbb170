"""Distributed Max-Weight CSMA scheduling over fading channels."""

__version__ = "0.1.0"
