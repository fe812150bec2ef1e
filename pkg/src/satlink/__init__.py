"""Optical satellite downlink channel model with decoy-state QKD key rates.

Modules cover the pass geometry, the layered standard atmosphere, refraction
and extinction along the slant path, Cn2 profiles, aperture-averaged beam
statistics, the distribution of transmittance, and finite-key decoy-state
BB84.
"""
__version__ = "0.1.0"
