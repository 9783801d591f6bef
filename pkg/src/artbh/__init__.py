"""Artificial black holes: ergospheres, horizons and wave tests for moving media."""

__version__ = "0.1.0"
