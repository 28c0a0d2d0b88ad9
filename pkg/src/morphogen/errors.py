"""Exception types shared across the package."""


class MorphogenError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MorphogenError, ValueError):
    """Invalid scenario configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NumericalFailure(MorphogenError, RuntimeError):
    """A numerical phase could not complete."""


class ConvergenceError(NumericalFailure):
    """An iteration exceeded its iteration budget."""


class StepRejected(NumericalFailure):
    """A time step produced a state violating the sign bounds."""
