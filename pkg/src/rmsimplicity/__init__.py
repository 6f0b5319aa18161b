"""Simplicity of random matrix spectra: samplers, spectral statistics, LCD certification and experiments."""

__version__ = "0.1.0"
