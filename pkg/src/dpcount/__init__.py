"""Distributed data plane verification by counting over a product DAG."""

__version__ = "0.1.0"
