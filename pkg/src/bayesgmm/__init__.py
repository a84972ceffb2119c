"""Bayesian inference for 1-D Gaussian mixtures with a min-count allocation prior."""
__version__ = "0.1.0"
