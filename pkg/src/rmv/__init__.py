"""Reflected McKean-Vlasov SDEs with jumps in time-dependent convex domains."""

__version__ = "0.1.0"
