"""Adaptive cross-shot memory for next-shot video generation, at toy scale."""

__version__ = "0.1.0"
