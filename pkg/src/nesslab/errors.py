"""Exception hierarchy shared by all nesslab modules."""


class NessLabError(Exception):
    """Base class for every error raised by nesslab."""


class ModelError(NessLabError, ValueError):
    """A model violates its structural invariants."""


class RangeError(NessLabError, ArithmeticError):
    """Non-finite values appeared while building densities or rates."""


class IntegrationError(NessLabError, ArithmeticError):
    """Master-equation integration failed before reaching the horizon."""

    def __init__(self, message, achieved_time):
        super().__init__(f"{message} (reached t={achieved_time:g})")
        self.achieved_time = achieved_time


class NonUniquenessError(NessLabError, ValueError):
    """The chain is reducible, so its stationary law is not unique."""


class DegenerateChainError(NessLabError, ValueError):
    """The spectral gap is numerically zero."""


class SolvabilityError(NessLabError, ValueError):
    """Right-hand side of a Poisson equation is not orthogonal to the kernel."""


class AbsoluteContinuityError(NessLabError, ValueError):
    """A path uses a transition that is forbidden under the reference process."""


class SizeLimitError(NessLabError, ValueError):
    """Requested state space exceeds the dense-solver cap."""


class ConfigError(NessLabError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class UnknownPresetError(ConfigError):
    """A model or field preset name is not registered."""
