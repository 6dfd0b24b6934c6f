"""Desk-scale laboratory for frequency-domain prediction of discounted state sequences."""

__version__ = "0.1.0"
