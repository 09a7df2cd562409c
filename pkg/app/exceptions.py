"""
Exception types raised by the training framework.
"""


class PinnError(Exception):
    """Base class for all framework errors."""


class NonFiniteError(PinnError, ValueError):
    """A NaN or infinity showed up where finite numbers are required."""


class GraphError(PinnError, ValueError):
    """A loss graph references parameters that were not registered with it."""


class SamplingError(PinnError, ValueError):
    """Point sampling could not be carried out for the requested region."""


class StaleDataError(PinnError, ValueError):
    """Smoothing data belongs to a different iteration than the caller."""


class UnknownNameError(PinnError, KeyError):
    """Unknown problem, scheme or preset name."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown name"


class ConfigError(PinnError, ValueError):
    """
    Invalid experiment configuration.

    Carries the offending key and line number when they are known so the CLI
    can point at the exact spot in the config file.
    """

    def __init__(self, message: str, key: str = None, line: int = None):
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key is not None:
            location.append(f"key '{key}'")
        prefix = ", ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class TrainingDiverged(PinnError, RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, iteration: int, history=None):
        super().__init__(message)
        self.iteration = iteration
        self.history = list(history or [])
