"""Temporal knowledge-base diffing, update classification, and evaluation."""

__version__ = "0.1.0"
