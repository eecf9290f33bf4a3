"""Exception types shared across the package."""


class GoalTensorError(Exception):
    """Base class for all package errors."""


class ModelIncompleteError(GoalTensorError):
    """A cost table or dynamics table is missing entries or has bad shape."""


class ScenarioError(GoalTensorError):
    """Scenario file failed schema or stochasticity validation.

    ``field`` is a dotted/indexed address into the document, e.g.
    ``source_dynamics[1][0][3]``.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ErgodicityError(GoalTensorError):
    """Chain has no unique stationary distribution (multiple closed classes)."""

    def __init__(self, message, closed_classes=None, unreachable=None):
        self.closed_classes = closed_classes
        self.unreachable = unreachable
        super().__init__(message)


class NonConvergenceError(GoalTensorError):
    """An iterative solver hit its sweep cap before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class EnumerationBudgetError(GoalTensorError):
    """Policy enumeration would exceed the configured budget."""


class ParameterError(GoalTensorError):
    """A policy or tuning parameter is outside its valid range."""


class UnreachableObservationError(GoalTensorError):
    """An observation has zero stationary probability, so its posterior is undefined."""
