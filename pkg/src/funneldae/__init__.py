"""Exact analysis of linear DAEs and funnel control of nonlinear functional DAEs."""

__version__ = "0.1.0"
