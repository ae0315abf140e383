"""Exception types shared across the package.

The CLI maps these onto stable exit codes: usage/configuration -> 2,
domain -> 3, resource/IO -> 4.
"""


class BranchingOUError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BranchingOUError, ValueError):
    """Invalid model or stepper configuration."""


class StateError(BranchingOUError, RuntimeError):
    """Operation applied to a system state that does not admit it."""


class ArgumentError(BranchingOUError, ValueError):
    """Out-of-range label or malformed argument."""


class DomainError(BranchingOUError, ValueError):
    """Parameter outside the mathematical domain of a closed form."""


class ResourceError(BranchingOUError, RuntimeError):
    """Requested computation exceeds the configured memory/size budget."""


class SnapshotParseError(BranchingOUError, ValueError):
    """Malformed snapshot file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NumericalError(BranchingOUError, RuntimeError):
    """A numerical routine (quadrature) failed to converge."""
