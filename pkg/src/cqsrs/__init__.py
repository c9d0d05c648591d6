"""Controlled secure remote sensing with GHZ probes: simulation toolkit."""

__version__ = "0.1.0"
