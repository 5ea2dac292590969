"""Hybrid quantum-classical generative model for rare-event data, on a numpy statevector simulator."""

__version__ = "0.1.0"
