"""Simulation and analysis for dispersive-fiber single-photon spectroscopy."""

__version__ = "0.1.0"
