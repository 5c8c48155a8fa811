"""Exception hierarchy shared by every serenqa module."""


class SerenQAError(Exception):
    """Base class for all library errors."""


class ParseError(SerenQAError, ValueError):
    """A file or string could not be parsed.

    Attributes:
        line: 1-based line number when the error is tied to a line of input.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SerenQAError, ValueError):
    """Input parsed but violates a data invariant."""


class NotFoundError(SerenQAError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DomainError(SerenQAError, ValueError):
    """Argument outside the operation's domain."""


class ConvergenceError(SerenQAError, ArithmeticError):
    pass


class DegenerateDistributionError(SerenQAError, ArithmeticError):
    """A probability quantity needed by a metric is zero or undefined."""


class UnsupportedPatternError(SerenQAError, ValueError):
    pass


class InfeasibleSplitError(SerenQAError):
    """Serendipity answers cannot be hidden without breaking an existing answer."""

    def __init__(self, message, conflicted=()):
        self.conflicted = tuple(conflicted)
        super().__init__(message)


class ScorerError(SerenQAError):
    """Wraps a failure raised by a partition scorer."""

    def __init__(self, message, partition):
        self.partition = partition
        super().__init__(message)


class PolicyTransportError(SerenQAError):
    pass


class ExplorationError(SerenQAError):
    """Exploration aborted; ``trace`` holds what was built before the failure."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class StaleCacheError(SerenQAError):
    pass
