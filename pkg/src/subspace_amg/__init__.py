"""Learned coarse spaces for two-level preconditioned conjugate gradients."""

__version__ = "0.1.0"
