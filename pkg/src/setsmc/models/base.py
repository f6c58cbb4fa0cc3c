"""Common interface for Bayesian targets driven by the tempering kernels.

A target couples an initial (prior) law with a log-likelihood potential V,
so the posterior satisfies d(post)/d(prior) proportional to exp(V).  The
scalar methods define the model; the batch drivers are what the samplers
call, and they tally forward evaluations so runs can report solver cost.
"""

from __future__ import annotations

import abc

import numpy as np

__all__ = ["TargetModel"]


class TargetModel(abc.ABC):
    """Initial law plus potential, with a forward-evaluation tally.

    Subclasses implement the scalar contract (``sample_initial``,
    ``log_potential``, ``log_initial_density``) and may override the batch
    methods when a vectorized form exists.  Model parameters are immutable
    after construction; ``n_potential_evals`` is the only mutable state and
    is purely diagnostic.
    """

    def __init__(self):
        self.n_potential_evals = 0

    @property
    @abc.abstractmethod
    def dimension(self) -> int:
        """Number of coordinates of a single particle."""

    @abc.abstractmethod
    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from the initial law, as a length-D vector."""

    @abc.abstractmethod
    def log_potential(self, u: np.ndarray) -> float:
        """Log-likelihood V(u) for a single particle."""

    @abc.abstractmethod
    def log_initial_density(self, u: np.ndarray) -> float:
        """Log-density of the initial law at u, up to a constant."""

    def exact_moments(self):
        """(mean, diagonal variance) of the posterior when known, else None."""
        return None

    # batch drivers -- the samplers only ever call these

    def initial_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n independent draws from the initial law, stacked as rows."""
        return np.stack([self.sample_initial(rng) for _ in range(n)])

    def potential(self, u: np.ndarray) -> np.ndarray:
        """V on a batch of particles (rows of u); counts one solve per row."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        self.n_potential_evals += u.shape[0]
        return self._potential_batch(u)

    def _potential_batch(self, u: np.ndarray) -> np.ndarray:
        return np.array([self.log_potential(row) for row in u])

    def log_prior(self, u: np.ndarray) -> np.ndarray:
        """Initial log-density on a batch of particles, up to a constant."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.array([self.log_initial_density(row) for row in u])
