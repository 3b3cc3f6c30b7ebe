"""Exception hierarchy shared by all modules."""


class PollDelayError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(PollDelayError, ValueError):
    """Raised for malformed or out-of-range model input."""


class DegenerateGroupError(InvalidInputError):
    """A signal group carries no load."""


class UnsupportedTopologyError(PollDelayError):
    """The requested quantity does not exist for this intersection layout
    (heavy-traffic machinery needs at least two loaded groups)."""


class UnstableLoadError(PollDelayError):
    """The requested load violates ``L * rho < 1``."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class SaturatedFlowError(PollDelayError):
    """A flow on its own is at or above saturation in the fluid model."""


class InfiniteDrainError(PollDelayError):
    """Drain times diverge because some flow has ``lambda >= mu``."""


class StateSpaceTooLargeError(PollDelayError):
    """The truncated Markov chain exceeds the configured state limit."""


class ReducibleChainError(PollDelayError):
    """The generator has no unique stationary distribution."""


class ConfigError(InvalidInputError):
    """Configuration document does not match the schema."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
