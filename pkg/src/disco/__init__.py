"""Aggregation-capable publish/subscribe over key-based routing."""

__version__ = "0.1.0"
