"""Relational quantum dynamics on small, explicit Hilbert spaces."""

__version__ = "0.1.0"
