"""Certify c-convexity of potentials for Lagrangian transport costs and check the induced maps."""

__version__ = "0.1.0"
