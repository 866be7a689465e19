"""Numerical laboratory for lattice heat/Schrodinger unique continuation."""
__version__ = "0.1.0"
