"""Simulator and analysis toolkit for mixed-species trapped-ion two-qubit
entangling gates (light-shift and Molmer-Sorensen)."""

__version__ = "0.1.0"
