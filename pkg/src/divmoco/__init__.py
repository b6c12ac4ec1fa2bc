"""Diversity-enhanced neural heuristic for multi-objective combinatorial optimization."""

__version__ = "0.1.0"
