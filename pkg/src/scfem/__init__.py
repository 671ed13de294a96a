"""Adaptive sparse-grid stochastic collocation with adaptive P1 finite elements."""

__version__ = "0.1.0"
