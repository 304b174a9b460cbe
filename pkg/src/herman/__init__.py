"""Verification of quantity entities in generated summaries against their source articles."""

__version__ = "0.1.0"
