"""Multipath background tracking with state-dependent noise and sequential detection."""

__version__ = "0.1.0"
