"""Arrow distributed queueing on trees: simulation, offline optima and analysis checks."""

__version__ = "0.1.0"
