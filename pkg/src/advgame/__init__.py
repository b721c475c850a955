"""Game-theoretic evaluation of adversarial defenses.

Trains a roster of small defenses, attacks them, builds the defender/attacker
payoff matrix and solves the zero-sum game for the mixed defense ensemble.
"""
from .errors import ConfigurationError, NumericalFailure
from .lp import GameSolution, solve_game, verify_equilibrium

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "NumericalFailure", "GameSolution", "solve_game", "verify_equilibrium"]
