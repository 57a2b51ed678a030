"""Exception types raised across the package."""


class ReftrackError(Exception):
    """Base class for all package errors."""


class DegenerateDistortion(ReftrackError):
    """det(grad xi) fell to or below the degeneracy floor (local interpenetration)."""


class DegenerateDeformation(ReftrackError):
    """A stored energy that needs det F > 0 was evaluated at det F <= 0."""


class NonSymmetricInput(ReftrackError):
    """A strain rate passed to a dissipative law is not symmetric."""


class OutOfDomain(ReftrackError):
    """A reference point lies outside the closed domain box."""


class NonConvergence(ReftrackError):
    """The momentum solver hit its iteration cap.

    The partial :class:`~reftrack.momentum.SolveReport` is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CflViolation(ReftrackError):
    """dt * max|v| / min(h) exceeded the configured cfl_max."""


class InterpenetrationDetected(ReftrackError):
    """min det(grad xi) became non-positive."""


class StepFailure(ReftrackError):
    """A coupled time step could not be completed.

    ``cause`` holds the underlying error, ``state`` the last healthy state.
    """

    def __init__(self, message, cause=None, state=None):
        super().__init__(message)
        self.cause = cause
        self.state = state


class UnknownCase(ReftrackError):
    """Requested manufactured case does not exist."""


class ConfigParseError(ReftrackError):
    """Malformed config text; ``line`` is the 1-based offending line."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ConfigValidationError(ReftrackError):
    """One or more config values violate a constraint.

    ``violations`` is a list of ``(field, constraint)`` pairs, all of them,
    not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{field}: {constraint}" for field, constraint in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
