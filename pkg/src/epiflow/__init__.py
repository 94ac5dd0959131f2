"""Excess-mortality reconstruction, NPI measures and panel econometrics for the 1918 pandemic."""
__version__ = "0.1.0"
