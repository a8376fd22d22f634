"""Exception hierarchy shared by all modules."""


class RobinConvError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(RobinConvError, ValueError):
    pass


class EvaluationError(RobinConvError):
    """A reaction returned a non-finite value.

    The offending sample is kept on ``point`` as ``(z, x, y)``.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class HypothesisViolatedError(RobinConvError):
    """A structural hypothesis failed; ``nodes`` lists offending node ids."""

    def __init__(self, message, nodes=None, report=None):
        super().__init__(message)
        self.nodes = [] if nodes is None else list(nodes)
        self.report = report


class DegenerateEigenfunctionError(RobinConvError):
    def __init__(self, message, eigenpair=None):
        super().__init__(message)
        self.eigenpair = eigenpair


class MarginNonpositiveError(RobinConvError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class LinearSolveFailedError(RobinConvError):
    pass


class SolverError(RobinConvError):
    """Base for nonlinear solver failures; ``last_iterate`` holds the field."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NewtonDivergedError(SolverError):
    pass


class PicardNotConvergedError(SolverError):
    pass


class PositivityViolatedError(SolverError):
    pass


class PositivityRequiredError(RobinConvError):
    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = [] if nodes is None else list(nodes)


class CollapseDetectedError(RobinConvError):
    """The continuation iterates vanish; ``trace`` holds the partial run."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(RobinConvError):
    """Config parse/validation failure (``line`` or ``field`` locate it)."""

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field
