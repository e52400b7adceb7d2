"""Exception types raised across the package."""


class EvofracError(Exception):
    """Base class for all package errors."""


class GridError(EvofracError, ValueError):
    """A time grid violates its invariants."""


class DimensionError(EvofracError, ValueError):
    """State dimensions of signals, laws or operators disagree."""


class LawError(EvofracError, ValueError):
    """A material law or its inputs violate the structural assumptions."""


class SingularSystemError(EvofracError, ArithmeticError):
    """A per-frequency system matrix could not be factorized."""

    def __init__(self, message: str, frequency: float | None = None):
        super().__init__(message)
        self.frequency = frequency


class ConfigError(EvofracError, ValueError):
    """Configuration text is malformed; carries every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))
