"""Numerical laboratory for Schrodinger dynamics driven by a finite-state
Markov potential: per-path split-step solvers, deterministic averaged
equations, Monte Carlo ensembles, spectral objects, and the diagnostics
that cross-check them against each other."""

__version__ = "0.1.0"
