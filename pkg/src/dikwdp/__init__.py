"""Selective differential privacy over DIKW-tagged datasets, with a sign-valued binary PSO choosing which items to noise."""

__version__ = "0.1.0"
