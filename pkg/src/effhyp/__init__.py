"""Verification toolkit for third-order weakly hyperbolic operators with triple characteristics."""

__version__ = "0.1.0"
