"""Replay-buffer sampling strategies, error bounds, and an exact tabular testbed."""

__version__ = "0.1.0"
