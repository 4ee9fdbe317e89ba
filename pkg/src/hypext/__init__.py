"""Constraint-aware analysis of over-determined first-order linear systems."""
__version__ = "0.1.0"
