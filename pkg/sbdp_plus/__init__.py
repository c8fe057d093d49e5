"""Distributed primal-dual optimization over coupled agents, with convergence certificates."""

__version__ = "0.1.0"
