"""Exception types shared across the toolkit."""


class FlowKernelError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(FlowKernelError):
    """Input file does not match the expected column schema."""


class InsufficientDataError(FlowKernelError):
    """Not enough observations to run the requested computation."""


class SingularSystemError(FlowKernelError):
    """Linear system is singular; a positive regularization strength is required."""


class CollinearityError(FlowKernelError):
    """Design matrix is rank deficient."""

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"collinear columns: {self.columns}")


class ExplosiveSimulationError(FlowKernelError):
    """Simulated point process exceeded the configured event cap."""


class SteadyStateUndefinedError(FlowKernelError):
    """Steady-state intensity requested for a process with branching ratio >= 1."""


class DegenerateInputError(FlowKernelError):
    """Input is degenerate for the requested statistic (zero variance, no events, ...)."""
