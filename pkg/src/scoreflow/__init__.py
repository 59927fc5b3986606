"""Score-weighted preference optimization of workflow generators."""

__version__ = "0.1.0"
