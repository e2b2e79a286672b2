"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical failures during a run exit 3.
"""


class MVJumpError(Exception):
    """Base class for all package errors."""


class ConfigError(MVJumpError, ValueError):
    """Invalid scenario, solver, experiment or noise configuration."""


class ParseError(ConfigError):
    """Lexical or syntactic error in a coefficient expression.

    ``position`` is the 0-based character offset into the source; ``line``
    and ``column`` are 1-based.
    """

    def __init__(self, message, position, line=1, column=None):
        self.message = message
        self.position = position
        self.line = line
        self.column = position + 1 if column is None else column
        super().__init__(f"{message} at position {position} (line {line}, column {self.column})")


class EvaluationError(MVJumpError, ArithmeticError):
    """A coefficient produced a non-finite value or left its domain."""


class DivergenceError(MVJumpError, RuntimeError):
    """A particle state left the finite range during a solver step."""

    def __init__(self, message, particle=None, step=None, value=None):
        self.particle = particle
        self.step = step
        self.value = value
        super().__init__(message)
