"""Exception hierarchy shared by the library, service and CLI.

The three leaf categories map onto the CLI exit codes (config -> 2,
data contract -> 3, numerical -> 4).
"""


class FunsensError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FunsensError):
    """Invalid run configuration, formula, or argument combination."""

    exit_code = 2


class DataContractError(FunsensError):
    """Input files or evaluation tables violate the declared manifest/schema."""

    exit_code = 3


class NumericalError(FunsensError):
    """Degenerate or failed numerical computation (zero variance, rank loss, divergence)."""

    exit_code = 4


class FitError(NumericalError):
    """Model fitting failed to converge or the design is rank deficient."""


class EstimateWarning(UserWarning):
    """Non-fatal estimator diagnostics (e.g. Monte-Carlo estimates outside [0, 1])."""
