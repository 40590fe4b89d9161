"""Stochastic trajectories of dispersive qubit readout and phase-correction protocols."""

__version__ = "0.1.0"
