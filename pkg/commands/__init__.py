"""
Subcommands of the mvlab command line
"""
from commands.particles import run_bismut, run_rate, run_simulate
from commands.reproduce import EXAMPLE_IDS, run_reproduce
from commands.spectral import run_semigroup, run_spectrum
from commands.stationary import run_stationary, run_sweep

COMMANDS = {
    "stationary": (run_stationary, "roots of the self-consistency equation"),
    "sweep-sigma": (run_sweep, "root count and m_plus over a log-uniform sigma grid"),
    "spectrum": (run_spectrum, "Galerkin spectrum of the linearized generator"),
    "semigroup-check": (run_semigroup, "Duhamel, invariance and decay checks of Q_t"),
    "simulate": (run_simulate, "particle run with distances to the stationary law"),
    "rate": (run_rate, "fitted W1 decay rate against the spectral gaps"),
    "bismut-check": (run_bismut, "Bismut gradient estimator against a finite-difference oracle"),
}

__all__ = ["COMMANDS", "EXAMPLE_IDS", "run_reproduce"]
