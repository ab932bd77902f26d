"""Fused text and price-history forecasting of binary market movements."""

__version__ = "0.1.0"
