"""Rank-based fan-out synthesis and JJ cost estimation for SFQ netlists."""

__version__ = "0.1.0"
