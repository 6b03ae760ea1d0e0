"""Locating small inclusions in a disk from partial Helmholtz boundary data."""

__version__ = "0.1.0"
