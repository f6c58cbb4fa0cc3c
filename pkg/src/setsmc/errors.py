"""Exception types shared across the package."""


class SetsmcError(Exception):
    """Base class for all package-specific errors."""


class WeightCollapse(SetsmcError):
    """All particle weights vanished (every log-weight is -inf or underflows)."""


class MarginalMismatch(SetsmcError):
    """Transport marginals are invalid or their sums disagree beyond tolerance."""


class InvalidPotential(SetsmcError):
    """A log-potential vector contains non-finite entries."""


class NoProposals(SetsmcError):
    """Scale adaptation requested before any proposal was recorded."""


class SolverFailure(SetsmcError):
    """A linear solve did not meet its residual tolerance."""


class ConfigError(SetsmcError):
    """Invalid run configuration (bad key, bad value, or bad range)."""


class OracleQualityWarning(UserWarning):
    """Reference-moment chain shows signs of poor mixing."""
