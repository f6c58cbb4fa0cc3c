"""Adaptive autoregressive Metropolis-Hastings mutation kernel.

Proposals follow the autoregressive form

    u' = m + rho (u - m) + sqrt(1 - rho^2) xi,   xi ~ Normal(0, diag(G)),

which is reversible with respect to phi = Normal(m, diag(G)).  Accepting
with probability min(1, [pi(u') phi(u)] / [pi(u) phi(u')]) therefore leaves
any target pi invariant: the phi-reversibility of the proposal supplies the
Hastings correction q(u|u')/q(u'|u) = phi(u)/phi(u').  The centering m and
diagonal scale G are refreshed from ensemble statistics, and rho adapts on
the realized acceptance rate with a doubling/halving rule, as in adaptive
MCMC practice (Andrieu and Thoms, 2008; Roberts and Rosenthal, 2009).

A rho of 1 makes the kernel the identity; rho near 0 proposes nearly
independent draws from phi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from setsmc.ensemble import Ensemble, weighted_diag_variance, weighted_mean
from setsmc.errors import NoProposals

__all__ = [
    "MutationState",
    "initial_state",
    "refresh_statistics",
    "propose",
    "mh_step",
    "adapt_rho",
]

logger = logging.getLogger(__name__)

# lower bound on proposal variances; collapsed ensembles must still propose
VARIANCE_FLOOR = 1e-12

# acceptance-rate band outside which rho is rescaled
RATE_LOW = 0.15
RATE_HIGH = 0.85


@dataclass(frozen=True)
class MutationState:
    """Proposal parameters (m, Gamma_diag, rho) plus acceptance counters."""

    m: np.ndarray
    gamma_diag: np.ndarray
    rho: float
    accepted: int = 0
    proposed: int = 0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        g = np.asarray(self.gamma_diag, dtype=float)
        if m.ndim != 1 or g.shape != m.shape:
            raise ValueError("m and gamma_diag must be 1-d with equal length")
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(g)):
            raise ValueError("mutation statistics must be finite")
        if np.any(g <= 0):
            raise ValueError("gamma_diag must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "gamma_diag", g)

    @property
    def acceptance_rate(self) -> float:
        if self.proposed == 0:
            return float("nan")
        return self.accepted / self.proposed


def initial_state(dim: int, rho: float = 0.5) -> MutationState:
    """Standard-normal proposal statistics before any ensemble is seen."""
    return MutationState(np.zeros(dim), np.ones(dim), rho)


def refresh_statistics(state: MutationState, e: Ensemble) -> MutationState:
    """Re-center the proposal on the ensemble's weighted mean and variance.

    Variances are floored so a collapsed ensemble still yields a valid
    proposal distribution; rho and the counters are preserved.
    """
    m = weighted_mean(e)
    g = np.maximum(weighted_diag_variance(e), VARIANCE_FLOOR)
    return replace(state, m=m, gamma_diag=g)


def propose(state: MutationState, u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Autoregressive proposal for a batch of particles (rows of u)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    rho = state.rho
    xi = rng.standard_normal(u.shape) * np.sqrt(state.gamma_diag)
    # written so rho == 1 returns u bit for bit (kernel degenerates to identity)
    return u + (rho - 1.0) * (u - state.m) + np.sqrt(1.0 - rho * rho) * xi


def _log_phi(u: np.ndarray, state: MutationState) -> np.ndarray:
    # proposal-center density up to its normalizing constant
    z = (u - state.m) ** 2 / state.gamma_diag
    return -0.5 * z.sum(axis=1)


def mh_step(
    state: MutationState,
    e: Ensemble,
    tau: float,
    model,
    rng: np.random.Generator,
    v: np.ndarray | None = None,
):
    """One Metropolis-Hastings sweep over all particles.

    Targets pi_tau proportional to mu_0 exp(tau V).  ``v`` may carry the
    cached potential values of the current positions; the returned triple
    (ensemble, state, v) carries them forward so later reweighting and
    bisection steps need no further model evaluations.  Non-finite model
    output for a proposal rejects that particle with a logged warning.
    """
    u = e.positions
    n = e.n_particles
    proposal = propose(state, u, rng)
    draws = rng.random(n)

    v_cur = model.potential(u) if v is None else np.asarray(v, dtype=float)
    v_prop = model.potential(proposal)
    log_ratio = (
        model.log_prior(proposal)
        + tau * v_prop
        + _log_phi(u, state)
        - model.log_prior(u)
        - tau * v_cur
        - _log_phi(proposal, state)
    )

    p_accept = np.exp(np.minimum(log_ratio, 0.0))
    failed = np.isnan(p_accept) | np.isnan(v_prop) | (v_prop == np.inf)
    if failed.any():
        logger.warning(
            "rejecting %d proposals with non-finite model output", int(failed.sum())
        )
        p_accept = np.where(failed, 0.0, p_accept)

    accept = draws < p_accept
    new_positions = np.where(accept[:, None], proposal, u)
    new_v = np.where(accept, v_prop, v_cur)
    new_state = replace(
        state,
        accepted=state.accepted + int(accept.sum()),
        proposed=state.proposed + n,
    )
    return Ensemble(new_positions, e.log_weights), new_state, new_v


def adapt_rho(state: MutationState) -> MutationState:
    """Rescale rho from the pooled acceptance rate and reset the counters.

    Rates below 15% double rho (capped at 1), rates above 85% halve it;
    anything in between leaves rho untouched.
    """
    if state.proposed == 0:
        raise NoProposals("cannot adapt rho before any proposal was made")
    rate = state.accepted / state.proposed
    rho = state.rho
    if rate < RATE_LOW:
        rho = min(1.0, 2.0 * rho)
    elif rate > RATE_HIGH:
        rho = rho / 2.0
    return replace(state, rho=rho, accepted=0, proposed=0)
