"""Imperfect-information safety timed games and cost-optimal observation sets."""
__version__ = "0.1.0"
