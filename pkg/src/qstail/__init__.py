"""Bounds and simulation for the Quickselect worst-case limit variable S."""

__version__ = "0.1.0"
