"""Abundance estimation from vestige counts with the triple Poisson hierarchy."""
__version__ = "0.1.0"
