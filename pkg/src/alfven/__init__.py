"""Pseudospectral simulator and verification harness for incompressible
MHD perturbations around a strong background magnetic field."""

__version__ = "0.1.0"
