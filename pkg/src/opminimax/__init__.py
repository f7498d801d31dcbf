"""Desk-scale laboratory for minimax rates of Lipschitz operator learning."""

__version__ = "0.1.0"
