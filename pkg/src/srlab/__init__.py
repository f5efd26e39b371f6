"""Desk-scale safe reinforcement learning with a learned low-dimensional safe region."""

__version__ = "0.1.0"
