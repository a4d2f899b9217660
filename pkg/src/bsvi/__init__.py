"""Penalized solvers and structural checks for backward stochastic
variational inequalities on a mixed clock."""

__version__ = "0.1.0"
