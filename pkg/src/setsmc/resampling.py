"""Classical resampling schemes for weighted particle ensembles.

Each scheme maps a normalized weight vector to ``N`` particle indices whose
empirical distribution is unbiased for the weights.  Inverse-CDF lookups use
cumulative sums in ascending index order, taking the first index whose
cumulative weight strictly exceeds the draw, so results are a deterministic
function of the weights and the RNG stream.

References
----------
Douc and Cappe (2005), Comparison of resampling schemes for particle
filtering; Hol, Schon and Gustafsson (2006), On resampling algorithms for
particle filters.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "resample_multinomial",
    "resample_stratified",
    "resample_systematic",
    "get_scheme",
    "SCHEMES",
]


def _check_weights(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights must be a nonempty 1-d array")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    if abs(weights.sum() - 1.0) > 1e-8:
        raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
    return weights


def _inverse_cdf(weights: np.ndarray, draws: np.ndarray) -> np.ndarray:
    # First index whose cumulative weight strictly exceeds the draw.
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard round-off at the top end
    return np.searchsorted(cumulative, draws, side="right").clip(max=len(weights) - 1)


def resample_multinomial(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``N`` i.i.d. indices from ``Categorical(weights)``."""
    weights = _check_weights(weights)
    n = weights.size
    return _inverse_cdf(weights, rng.random(n))


def resample_stratified(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Stratified resampling: one uniform per stratum, ``(i + U_i) / N``."""
    weights = _check_weights(weights)
    n = weights.size
    draws = (np.arange(n) + rng.random(n)) / n
    return _inverse_cdf(weights, draws)


def resample_systematic(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: a single shared uniform, ``(i + U) / N``."""
    weights = _check_weights(weights)
    n = weights.size
    draws = (np.arange(n) + rng.random()) / n
    return _inverse_cdf(weights, draws)


SCHEMES = {
    "multinomial": resample_multinomial,
    "stratified": resample_stratified,
    "systematic": resample_systematic,
}


def get_scheme(name: str):
    """Look up a resampling scheme by name (default choice is stratified)."""
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(
            f"unknown resampling scheme {name!r}; choose from {sorted(SCHEMES)}"
        ) from None
