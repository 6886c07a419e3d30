"""Numerical laboratory for odd perturbations of the wormhole Yang-Mills kink."""

__version__ = "0.1.0"
