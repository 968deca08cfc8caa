"""Reputation formation with private signals.

Finite stage games with a long-run player who privately observes a signal
of player 0's action, optimal-transport checks for whether a commitment
strategy's signal-action coupling is pinned down by its marginals,
commitment payoff bounds, mechanism orderability, and a seeded Monte Carlo
simulator of the belief dynamics.
"""

from reptoolkit.errors import (
    DomainError,
    GameError,
    ReptoolkitError,
    ScopeLimitError,
    SimulationError,
)
from reptoolkit.tolerances import Tolerances, get_tolerances, override_tolerances

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "GameError",
    "ReptoolkitError",
    "ScopeLimitError",
    "SimulationError",
    "Tolerances",
    "get_tolerances",
    "override_tolerances",
    "__version__",
]
