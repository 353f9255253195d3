"""Koashi-Imoto decomposition and qubit/ebit compression of bipartite quantum sources."""

__version__ = "0.1.0"
