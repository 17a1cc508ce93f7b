"""secdyn: constraint-driven tet FEM simulation and a patch-local neural
emulator that replaces the implicit integrator for character secondary motion."""

__version__ = "0.1.0"
