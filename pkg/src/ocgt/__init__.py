"""Distributed online convex optimization with compressed gradient tracking.

Simulation engine for gossip-network online learning under full, stochastic
and one-point bandit feedback, with compressed communication and a numerical
step-size certifier for the driving error recursion.
"""

from . import compress, engine, graph, losses, streams, theory

__all__ = ["compress", "engine", "graph", "losses", "streams", "theory"]
__version__ = "0.1.0"
