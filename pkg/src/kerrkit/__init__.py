"""Simulation toolkit for a Kerr-cat qubit coupled to bosonic cavities."""

__version__ = "0.1.0"
