"""Simulated shared-nothing columnar OLAP engine."""

__version__ = "0.1.0"
