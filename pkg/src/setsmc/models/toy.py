"""Gaussian test target with a banded squared-exponential covariance.

The initial law is standard normal and the potential is the quadratic

    V(u) = -(u' G^{-1} u - u'u) / 2,    G_ij = sigma^2 exp(-(j - i)^2 / (2 l^2)),

so the posterior is exactly Normal(0, G).  Every marginal variance equals
sigma^2, which makes moment errors of an approximate sampler directly
comparable across coordinates and dimensions.
"""

from __future__ import annotations

import numpy as np

from setsmc.models.base import TargetModel

__all__ = ["GaussianToy"]

# relative eigenvalue floor: long bands make the covariance numerically
# semidefinite, so tiny modes are lifted to keep the precision bounded
EIG_FLOOR = 1e-12


class GaussianToy(TargetModel):
    """Banded-Gaussian posterior Normal(0, G) reached from a Normal(0, I) start.

    Parameters
    ----------
    dimension : int
        Number of coordinates D.
    sigma : float
        Marginal standard deviation; every diagonal entry of G is sigma^2.
    ell : float
        Correlation length of the squared-exponential band.
    """

    def __init__(self, dimension: int = 20, sigma: float = 2.0, ell: float = 4.0):
        super().__init__()
        if dimension < 1:
            raise ValueError("dimension must be positive")
        if sigma <= 0 or ell <= 0:
            raise ValueError("sigma and ell must be positive")
        idx = np.arange(dimension)
        gap = idx[:, None] - idx[None, :]
        cov = sigma**2 * np.exp(-(gap**2) / (2.0 * ell**2))
        lam, q = np.linalg.eigh(cov)
        if lam.min() < -1e-10 * lam.max():
            raise ValueError("covariance is not positive semidefinite")
        lam = np.maximum(lam, EIG_FLOOR * lam.max())
        self._lam = lam
        self._q = q
        self._dimension = dimension
        self.sigma = float(sigma)
        self.ell = float(ell)
        # the covariance actually targeted, with the floored spectrum
        self.covariance = (q * lam) @ q.T

    @property
    def dimension(self) -> int:
        return self._dimension

    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self._dimension)

    def initial_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self._dimension))

    def log_potential(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        z = self._q.T @ u
        return float(-0.5 * (z @ (z / self._lam) - u @ u))

    def log_initial_density(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return float(-0.5 * u @ u)

    def _potential_batch(self, u: np.ndarray) -> np.ndarray:
        z = u @ self._q
        quad = np.einsum("ij,ij->i", z, z / self._lam)
        return -0.5 * (quad - np.einsum("ij,ij->i", u, u))

    def log_prior(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return -0.5 * np.einsum("ij,ij->i", u, u)

    def exact_moments(self):
        """Posterior mean 0 and marginal variances sigma^2."""
        return np.zeros(self._dimension), np.full(self._dimension, self.sigma**2)

    def posterior_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact posterior draws, for oracle comparisons in tests."""
        root = self._q * np.sqrt(self._lam)
        return rng.standard_normal((n, self._dimension)) @ root.T
