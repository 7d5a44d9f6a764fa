"""Stochastic-gravitation toy model of quantum coherence and Bell correlations."""

__version__ = "0.1.0"
