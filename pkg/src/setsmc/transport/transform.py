"""Ensemble transform: moving particles along an optimal coupling.

Replaces resampling by a deterministic map: each particle moves to the
conditional mean of the reweighted measure given its own index under the
optimal coupling, keeping the original weights.  The transformed ensemble
reproduces the reweighted mean exactly (up to round-off) and every output
position lies in the convex hull of the inputs.
"""

from __future__ import annotations

import numpy as np

from setsmc.ensemble import Ensemble, reweight
from setsmc.transport.solver import build_cost_matrix, solve_discrete_ot

__all__ = ["ensemble_transform", "apply_bayes_transform"]


def ensemble_transform(e: Ensemble, beta: np.ndarray) -> Ensemble:
    """Map ``e`` (weights alpha) onto target weights ``beta`` by exact OT.

    Output position i is the barycenter (1/alpha_i) sum_j C_ij u_j of the
    optimal coupling row; output weights equal the input weights.
    """
    beta = np.asarray(beta, dtype=float)
    n = e.n_particles
    if beta.shape != (n,):
        raise ValueError(f"beta must have shape ({n},), got {beta.shape}")
    if n == 1:
        return e

    alpha = e.weights()
    cost = build_cost_matrix(e.positions)
    coupling = solve_discrete_ot(cost, alpha, beta)

    if coupling.support_size == n and np.array_equal(coupling.rows, coupling.cols):
        # identity plan (e.g. beta == alpha): identity map, exactly
        return Ensemble(e.positions, e.log_weights)

    acc = np.zeros_like(e.positions)
    np.add.at(acc, coupling.rows, coupling.masses[:, None] * e.positions[coupling.cols])
    # rows carrying no mass keep their position; their weight is ~0 anyway
    safe = alpha > 1e-300
    out = np.where(safe[:, None], acc / np.where(safe, alpha, 1.0)[:, None], e.positions)

    # barycenters are convex combinations; clip away round-off dust
    lo = e.positions.min(axis=0)
    hi = e.positions.max(axis=0)
    np.clip(out, lo, hi, out=out)
    return Ensemble(out, e.log_weights)


def apply_bayes_transform(e: Ensemble, dv: np.ndarray, dtau: float) -> Ensemble:
    """One tempering update without resampling: reweight, then transform.

    Computes target weights beta_i proportional to alpha_i exp(dtau dv_i)
    and transports the ensemble onto them; an equally weighted input yields
    an equally weighted output.
    """
    if dtau == 0.0:
        return e
    beta = reweight(e, dv, dtau).weights()
    # exp of log-normalized weights can miss sum 1 by ~eps*|dtau*dv|, which
    # for deeply tempered potentials exceeds the solver's marginal gate
    beta = beta / beta.sum()
    return ensemble_transform(e, beta)
