"""Exception hierarchy shared by all swarmloc modules."""


class SwarmLocError(Exception):
    """Base class for every error raised by swarmloc."""


class InputError(SwarmLocError, ValueError):
    """Malformed or out-of-domain input values."""


class ConfigurationError(SwarmLocError, ValueError):
    """Invalid node layout, bounds or settings."""


class DegeneratePairError(SwarmLocError, ArithmeticError):
    """Two nodes coincide, so the distance derivative is undefined."""


class UnderdeterminedError(SwarmLocError):
    """A ranging frame carries too few constraints to fix every mobile node."""


class NumericalError(SwarmLocError, ArithmeticError):
    """A non-finite value appeared during iteration."""


class DegenerateTestError(SwarmLocError, ValueError):
    """A statistical test has no defined outcome (e.g. all differences zero)."""


class SchemaError(SwarmLocError, ValueError):
    """A file does not match the expected CSV/JSON layout."""


class FrameError(SwarmLocError):
    """Wraps an error raised while processing one frame of a sequence."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"frame {index}: {cause}")
