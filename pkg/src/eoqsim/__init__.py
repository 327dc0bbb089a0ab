"""Subspace Monte Carlo simulator for exchange-only spin qubits."""

__version__ = "0.1.0"
