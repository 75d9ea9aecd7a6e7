"""
Error hierarchy shared by every service.

Each service declares its own subclass (HistoryError, ModelError, ...) next to
its code. The CLI only looks at `exit_code` to decide how a run ended:

    2 - configuration / precondition problem
    3 - runtime numerical failure
    4 - optimiser did not converge, or a diagnostic missed its tolerance
"""


class HompError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code: int = 2


class ConfigError(HompError):
    """Invalid input, violated precondition or malformed document."""

    exit_code = 2


class NumericalError(HompError):
    """A computation produced something it cannot continue from."""

    exit_code = 3


class ConvergenceError(HompError):
    """The optimiser (or a diagnostic) did not reach its target."""

    exit_code = 4
