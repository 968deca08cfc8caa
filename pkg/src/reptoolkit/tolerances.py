"""Numerical tolerances.

Defaults live in a frozen dataclass; a context variable holds the active
set so that a scenario file can override them for one analysis without
threading a parameter through every call.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    construction: float = 1e-12  # probability sums at construction time
    rank: float = 1e-9  # singular value cutoff for the identification test
    support: float = 1e-10  # entries above this count as in the support
    cm: float = 1e-9  # cycle gains within +-cm are reported as marginal
    tie: float = 1e-9  # argmax membership
    conf: float = 1e-9  # equality of signal distributions

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()
_active: contextvars.ContextVar[Tolerances] = contextvars.ContextVar(
    "reptoolkit_tolerances", default=DEFAULT_TOLERANCES
)


def get_tolerances() -> Tolerances:
    return _active.get()


@contextlib.contextmanager
def override_tolerances(**changes):
    """Temporarily replace some tolerances, e.g. ``override_tolerances(cm=1e-6)``."""
    unknown = set(changes) - set(DEFAULT_TOLERANCES.as_dict())
    if unknown:
        raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
    for key, value in changes.items():
        if not (isinstance(value, (int, float)) and value >= 0):
            raise ValueError(f"tolerance {key} must be a non-negative number")
    token = _active.set(replace(_active.get(), **{k: float(v) for k, v in changes.items()}))
    try:
        yield _active.get()
    finally:
        _active.reset(token)
