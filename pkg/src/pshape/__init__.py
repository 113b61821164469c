"""Probabilistic amplitude shaping: distribution matchers, PAS link simulation, error analysis."""

__version__ = "0.1.0"
