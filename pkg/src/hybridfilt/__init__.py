"""Simulation, filtering and estimation for diffusions with hidden Markov switching."""
__version__ = "0.1.0"
