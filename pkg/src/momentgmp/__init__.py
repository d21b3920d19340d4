"""Moment-SoS relaxations of generalized moment problems and symmetric tensor
decomposition on top of a first-order conic solver."""

__version__ = "0.1.0"
