"""Stochastic-geometry laboratory: samplers, scores, moment and cumulant diagnostics."""

__version__ = "0.1.0"
