"""Numerical companion for norm inflation of KP-I: approximate solutions,
their residual estimates and a pseudospectral solver."""

__version__ = "0.1.0"
