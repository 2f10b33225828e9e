"""
Visual Route Agents - image-based multi-agent TSP/mTSP experiment harness

This package solves Euclidean TSP/mTSP instances through vision agents that
read rendered route images, and measures them against a reference solver.
"""

__version__ = "0.1.0"

from .core.server import HarnessMCPServer

__all__ = ["HarnessMCPServer"]
