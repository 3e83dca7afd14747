"""Spectral laboratory for the Klein-Gordon-Schroedinger system on the torus."""

__version__ = "0.1.0"
