"""Satellite-terrestrial coexistence simulator with multistatic ISAC."""

__version__ = "0.1.0"
