"""Shared exception types."""


class ShapeError(ValueError):
    """Vector or matrix dimensions do not match the operator."""


class DomainError(ValueError):
    """Input violates a documented precondition."""


class CapacityError(RuntimeError):
    """Requested computation exceeds the enumeration/grid budget."""


class ConfigError(ValueError):
    """Invalid rule or experiment configuration."""


class ParseError(ValueError):
    """Malformed input file; message names the offending cell."""


class GenerationError(RuntimeError):
    """Synthetic problem generation failed its own oracle check."""


class SolverError(RuntimeError):
    """Inner solver did not reach its tolerance within the iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
