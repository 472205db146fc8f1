"""Secure compilation pipeline over five small languages."""

__version__ = "0.1.0"
