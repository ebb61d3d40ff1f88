"""Exception hierarchy shared by the solver, harness and CLI."""


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class NewtonError(SolverError):
    """A Newton iteration (scalar or field) failed to reach its tolerance."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class PositivityError(SolverError):
    """The temperature left ``(0, inf)``; the time step is too large."""


class PicardError(SolverError):
    """The fixed-point iteration hit its cap."""

    def __init__(self, message, ratios=()):
        super().__init__(message)
        self.ratios = list(ratios)


class ConfigError(ValueError):
    """A run configuration violates one of the standing assumptions C1-C8."""

    def __init__(self, label, message):
        super().__init__(f"{label}: {message}")
        self.label = label


class InvariantViolation(RuntimeError):
    """A runtime invariant (mass, positivity, acceptance gate) was violated."""
