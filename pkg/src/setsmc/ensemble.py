"""Weighted particle ensembles and log-space weight arithmetic.

An :class:`Ensemble` is the object every operator in this package maps:
``N`` particle positions in ``R^D`` together with normalized log-weights.
All weight arithmetic is done in log space with log-sum-exp, because the
tempered potentials of PDE likelihoods routinely span hundreds of log-units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import WeightCollapse

__all__ = [
    "Ensemble",
    "normalize_log_weights",
    "reweight",
    "ess",
    "weighted_mean",
    "weighted_diag_variance",
    "save_ensemble_csv",
    "load_ensemble_csv",
]


def normalize_log_weights(raw: np.ndarray) -> np.ndarray:
    """Self-normalize a vector of unnormalized log-weights.

    Returns ``raw - logsumexp(raw)``, so the result is invariant under
    adding a constant to ``raw`` and satisfies ``logsumexp(result) == 0``.

    Raises
    ------
    WeightCollapse
        If no entry is finite (the normalizer is -inf or NaN).
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("log-weights must be a nonempty 1-d array")
    total = logsumexp(raw)
    if not np.isfinite(total):
        raise WeightCollapse("all log-weights are -inf; cannot normalize")
    return raw - total


@dataclass(frozen=True)
class Ensemble:
    """``N`` particles in ``R^D`` with normalized log-weights.

    Parameters
    ----------
    positions : (N, D) array
        Particle coordinates, one particle per row.
    log_weights : (N,) array
        Log-weights; normalized at construction so the weights sum to one.

    Ensembles are immutable: the underlying arrays are marked read-only and
    every operation returns a new instance, so shared instances are safe to
    read concurrently.
    """

    positions: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if positions.ndim != 2:
            raise ValueError("positions must be a 2-d (N, D) array")
        if positions.size == 0:
            raise ValueError("ensemble needs at least one particle and one dimension")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions contain non-finite entries")
        lw = normalize_log_weights(self.log_weights)
        if lw.shape[0] != positions.shape[0]:
            raise ValueError(
                f"{lw.shape[0]} log-weights for {positions.shape[0]} particles"
            )
        if np.any(np.isneginf(lw)):
            raise WeightCollapse("zero-weight particles are not allowed")
        positions = positions.copy()
        lw = lw.copy()
        positions.flags.writeable = False
        lw.flags.writeable = False
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def equal_weights(cls, positions: np.ndarray) -> "Ensemble":
        """Build an equally weighted ensemble from particle positions."""
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        n = positions.shape[0]
        return cls(positions, np.full(n, -np.log(n)))

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def weights(self) -> np.ndarray:
        """Linear-space weights (may underflow for extremely negative logs)."""
        return np.exp(self.log_weights)


def reweight(e: Ensemble, dv: np.ndarray, dtau: float) -> Ensemble:
    """Apply the Bayes operator for the tempered potential increment.

    Multiplies each weight by ``exp(dtau * dv_i)`` and renormalizes;
    positions are unchanged.  ``dv`` holds per-particle log-potential
    values and ``dtau`` is the (nonnegative) temperature increment.
    """
    dv = np.asarray(dv, dtype=float)
    if dv.shape != (e.n_particles,):
        raise ValueError(f"potential length {dv.shape} != particle count {e.n_particles}")
    if not np.isfinite(dtau):
        raise ValueError("temperature increment must be finite")
    if dtau < 0:
        raise ValueError("temperature increment must be nonnegative")
    return Ensemble(e.positions, e.log_weights + dtau * dv)


def ess(e: Ensemble) -> float:
    """Normalized effective sample size, ``1 / (N * sum(w_i^2))`` in ``(0, 1]``.

    Equals 1 exactly for uniform weights and approaches ``1/N`` as the
    weights degenerate onto a single particle.
    """
    lw = e.log_weights  # normalized: logsumexp(lw) == 0
    return float(np.exp(-logsumexp(2.0 * lw) - np.log(e.n_particles)))


def weighted_mean(e: Ensemble) -> np.ndarray:
    """Weighted ensemble mean, ``sum_i w_i u_i``."""
    return e.weights() @ e.positions


def weighted_diag_variance(e: Ensemble) -> np.ndarray:
    """Weighted marginal variances, ``sum_i w_i u_{i,d}^2 - mean_d^2``.

    Uses the population convention (no ``N/(N-1)`` correction), which for
    equal weights is the plain ``1/N`` empirical variance.  Tiny negative
    round-off is clipped to zero.
    """
    w = e.weights()
    m = w @ e.positions
    second = w @ (e.positions**2)
    return np.maximum(second - m**2, 0.0)


def save_ensemble_csv(e: Ensemble, path) -> None:
    """Write an ensemble snapshot as CSV with header ``particle_id, w, x_0..``.

    Intended for debugging and golden tests; weights are written in linear
    space, so extremely small weights lose precision.
    """
    w = e.weights()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["particle_id", "w"] + [f"x_{d}" for d in range(e.dimension)])
        for i in range(e.n_particles):
            # repr of a builtin float is the shortest exact round-trip form
            writer.writerow(
                [i, repr(float(w[i]))] + [repr(float(x)) for x in e.positions[i]]
            )


def load_ensemble_csv(path) -> Ensemble:
    """Read an ensemble snapshot written by :func:`save_ensemble_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["particle_id", "w"]:
            raise ValueError(f"unexpected snapshot header: {header!r}")
        rows = [row for row in reader if row]
    w = np.array([float(row[1]) for row in rows])
    positions = np.array([[float(x) for x in row[2:]] for row in rows])
    if np.any(w <= 0):
        raise WeightCollapse("snapshot contains nonpositive weights")
    return Ensemble(positions, np.log(w))
