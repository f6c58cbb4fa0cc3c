"""Sequential ensemble transport and tempered SMC particle inference."""

from setsmc.ensemble import (
    Ensemble,
    ess,
    normalize_log_weights,
    reweight,
    weighted_diag_variance,
    weighted_mean,
)
from setsmc.errors import (
    ConfigError,
    InvalidPotential,
    MarginalMismatch,
    NoProposals,
    SetsmcError,
    SolverFailure,
    WeightCollapse,
)

__version__ = "0.1.0"

__all__ = [
    "Ensemble",
    "ess",
    "normalize_log_weights",
    "reweight",
    "weighted_diag_variance",
    "weighted_mean",
    "SetsmcError",
    "ConfigError",
    "InvalidPotential",
    "MarginalMismatch",
    "NoProposals",
    "SolverFailure",
    "WeightCollapse",
    "__version__",
]
