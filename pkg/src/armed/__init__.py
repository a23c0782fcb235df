"""Adversarially-regularized mixed effects dense networks for clustered data."""

__version__ = "0.1.0"
