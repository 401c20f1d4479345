"""Robustness against x86-TSO: checking, fence synthesis, parameterized programs."""

__version__ = "0.1.0"
