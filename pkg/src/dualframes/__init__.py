"""Weighted and empirical dual frames for POVM-based observable estimation."""

__version__ = "0.1.0"
