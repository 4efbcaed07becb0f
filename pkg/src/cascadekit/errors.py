"""Exception types shared across the toolkit."""


class CascadeKitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(CascadeKitError):
    """Bad input: malformed manifest, dimension mismatch, invalid spec, etc."""


class InfeasibleTargetError(CascadeKitError):
    """No candidate satisfies the requested target.

    Carries the best value that *was* achievable so callers can report a
    nearest-miss diagnostic.
    """

    def __init__(self, message, best_achievable=None):
        super().__init__(message)
        self.best_achievable = best_achievable
