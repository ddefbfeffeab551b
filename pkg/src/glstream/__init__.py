"""Streaming k-graphlet distribution estimation over edge lists."""

__version__ = "0.1.0"
