"""Simulation toolkit for the scrambling-based probabilistic SWAP protocol."""

__version__ = "0.1.0"
