"""fblab: two-phase free-boundary simulation and verification toolkit."""

__version__ = "0.1.0"
