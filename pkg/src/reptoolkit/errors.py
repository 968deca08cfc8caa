"""Exception hierarchy shared by all modules."""


class ReptoolkitError(Exception):
    """Base class for library errors."""


class GameError(ReptoolkitError, ValueError):
    """Malformed input: bad probabilities, shapes, labels or parameters."""


class ScopeLimitError(ReptoolkitError):
    """An exhaustive enumeration would exceed its configured size limit."""


class DomainError(ReptoolkitError):
    """Input is well formed but the requested analysis does not apply."""


class SimulationError(ReptoolkitError):
    """Raised when a simulated history is impossible under the model."""
