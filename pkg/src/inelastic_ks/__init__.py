"""Monotone-iteration solver for the inelastic Boltzmann equation near vacuum."""
