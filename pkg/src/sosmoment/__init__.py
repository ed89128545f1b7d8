"""Moment problems with piecewise SOS-convex objectives, solved as exact SDPs."""

__version__ = "0.1.0"
