"""Harmonic analysis toolkit for finite spaces of homogeneous type."""

__version__ = "0.1.0"
