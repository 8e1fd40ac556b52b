"""Multi-fidelity power-system dynamic simulation."""
__version__ = "0.1.0"
