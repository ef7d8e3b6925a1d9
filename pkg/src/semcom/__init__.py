"""Attention-driven semantic image transmission at desk scale."""

__version__ = "0.1.0"
