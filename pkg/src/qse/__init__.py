"""Statevector simulation, hybrid quantum-classical classifiers, circuit
cutting and an edge-fog-cloud continuum simulator."""

__version__ = "0.1.0"
