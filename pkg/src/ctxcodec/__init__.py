"""Conditional video codec with flow-oriented context modulation."""

__version__ = "0.1.0"
