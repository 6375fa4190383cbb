"""Exception types shared across the package.

The CLI maps these onto process exit codes (config errors -> 2, data format
errors -> 3, numeric failures -> 4); library callers can catch them directly.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config error for '{field}': {message}")


class DataFormatError(ValueError):
    """An input data file does not match the expected format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(ArithmeticError):
    """A fit produced a non-finite quantity or an inconsistent state."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class MonotonicityError(NumericError):
    """The objective decreased where a coordinate ascent guarantees it cannot.

    This always indicates an internal inconsistency (a wrong update or a
    wrong objective), never a property of the data, so it is raised as a
    hard error rather than a warning.
    """
