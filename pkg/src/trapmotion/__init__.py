"""Attenuation-projection simulation and rigid-motion recovery for trapped particles."""

__version__ = "0.1.0"
