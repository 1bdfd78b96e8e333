"""Symbolic matrix-reasoning puzzles, a triple-enumerating student network and
an actor-critic teacher that picks the category mix of each training batch."""

__version__ = "0.1.0"
