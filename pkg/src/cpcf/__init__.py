"""Conformal set-size monitoring of forgetting in class-incremental MLPs."""

__version__ = "0.1.0"
