"""Similarity-conditioned neural synthesis of impact sound effects."""

__version__ = "0.1.0"
