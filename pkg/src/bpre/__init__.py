"""Branching processes in i.i.d. random environment: simulation, exact
quenched survival probabilities and conditioned-walk diagnostics."""

__version__ = "0.1.0"
