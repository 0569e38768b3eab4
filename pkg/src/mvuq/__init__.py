"""Multi-view satellite features, probabilistic regression, and uncertainty scoring."""

__version__ = "0.1.0"
