"""Unsupervised object discovery with part-based Probabilistic Hough Matching."""
__version__ = "0.1.0"
