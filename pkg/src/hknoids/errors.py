"""Exception hierarchy shared across the toolkit."""


class HknoidsError(Exception):
    """Base class for all toolkit errors."""


class DomainError(HknoidsError, ValueError):
    """A point or parameter lies outside the admissible region."""


class ConfigError(HknoidsError, ValueError):
    """A run configuration violates a precondition.  CLI exit code 3."""


class MeshQualityError(HknoidsError):
    """Generated mesh fails the minimum-angle gate."""


class SolverError(HknoidsError):
    """Newton iteration failed to converge.  CLI exit code 2."""

    def __init__(self, message, history=None, last_iterate=None):
        super().__init__(message)
        self.history = history or []
        self.last_iterate = last_iterate


class BracketError(HknoidsError):
    """A root bracket could not be established (no sign change found)."""

    def __init__(self, message, scan=None):
        super().__init__(message)
        self.scan = scan or []


class LadderError(HknoidsError):
    """Truncation ladder violated monotonicity or failed to stabilize."""


class CheckFailure(HknoidsError):
    """An invariant check failed.  CLI exit code 1."""
