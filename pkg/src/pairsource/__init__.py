"""Modeling, simulation and estimation for spectrally filtered SPDC pair sources."""

__version__ = "0.1.0"
