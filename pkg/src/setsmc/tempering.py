"""Adaptive tempering drivers for the transform and resampling samplers.

Both samplers move an ensemble through the tempered family
pi_tau proportional to mu_0 exp(tau V) from tau = 0 (initial law) to
tau = 1 (posterior).  Each increment is chosen adaptively so the effective
sample size of the incremental weights lands on a target fraction xi, as
in Jasra et al. (2011).  The two methods differ only in how the weighted
ensemble is returned to uniform weights: a discrete optimal-transport
ensemble transform, or classical resampling.  Between temperatures both
carry a cache of potential values, so choosing the next temperature and
reweighting never trigger model evaluations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from setsmc.ensemble import Ensemble, reweight
from setsmc.errors import InvalidPotential, WeightCollapse
from setsmc.mutation import (
    MutationState,
    adapt_rho,
    initial_state,
    mh_step,
    refresh_statistics,
)
from setsmc.resampling import get_scheme
from setsmc.rng import INIT, MUTATE, RESAMPLE, stream
from setsmc.transport.transform import apply_bayes_transform

__all__ = [
    "Schedule",
    "TemperatureRecord",
    "RunReport",
    "tempered_ess",
    "next_temperature",
    "set_step",
    "smc_step",
    "run",
]

METHODS = ("set", "smc")

# ESS-matching tolerance for the accepted temperature (unless it is 1)
ESS_TOL = 1e-6
# bisection interval width below which the increment is considered resolved
TAU_TOL = 1e-10
MAX_BISECT = 200


@dataclass(frozen=True)
class Schedule:
    """A realized temperature ladder 0 = tau_0 < ... < tau_K = 1."""

    temperatures: np.ndarray
    xi: float = 0.5

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a schedule needs at least the endpoints 0 and 1")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("schedule must start at 0 and end at exactly 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("temperatures must be strictly increasing")
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must lie in (0, 1)")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "temperatures", t)

    @property
    def n_steps(self) -> int:
        return self.temperatures.size - 1


@dataclass(frozen=True)
class TemperatureRecord:
    """Diagnostics for one accepted temperature."""

    tau: float
    ess: float  # normalized incremental ESS at which tau was accepted
    rho: float  # proposal scale used for this step's sweeps
    acceptance_rate: float  # pooled over the sweeps; NaN when there are none
    n_solves: int  # cumulative forward evaluations once the step finished


@dataclass(frozen=True)
class RunReport:
    """Full record of one tempering run."""

    method: str
    n_particles: int
    n_sweeps: int
    xi: float
    seed: int
    records: tuple
    ensemble: Ensemble
    wall_time: float = field(compare=False, default=0.0)

    @property
    def n_temperatures(self) -> int:
        return len(self.records)

    @property
    def n_solves(self) -> int:
        return self.records[-1].n_solves

    @property
    def schedule(self) -> Schedule:
        taus = np.concatenate([[0.0], [r.tau for r in self.records]])
        return Schedule(taus, self.xi)


def tempered_ess(v: np.ndarray, dtau: float) -> float:
    """Normalized ESS of incremental weights proportional to exp(dtau * v).

    Computed in log space from a uniformly weighted start; equals 1 exactly
    at dtau = 0 and is non-increasing in dtau.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("potential cache must be a nonempty 1-d array")
    if not np.all(np.isfinite(v)):
        raise InvalidPotential("potential values contain non-finite entries")
    x = dtau * v
    return float(np.exp(2.0 * logsumexp(x) - logsumexp(2.0 * x) - np.log(v.size)))


def next_temperature(v: np.ndarray, tau: float, xi: float) -> float:
    """Smallest temperature above tau whose incremental ESS drops to xi.

    Returns exactly 1.0 when even the full remaining increment keeps the
    ESS above xi; otherwise bisects on the temperature until the ESS is
    within ESS_TOL of xi (from above) and the interval is below TAU_TOL.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"current temperature must lie in [0, 1), got {tau}")
    if not 0.0 < xi < 1.0:
        raise ValueError(f"xi must lie in (0, 1), got {xi}")
    if tempered_ess(v, 1.0 - tau) > xi:
        return 1.0
    lo, hi = tau, 1.0
    ess_lo = 1.0
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # interval exhausted in floating point
            break
        e = tempered_ess(v, mid - tau)
        if e > xi:
            lo, ess_lo = mid, e
        else:
            hi = mid
        if hi - lo <= TAU_TOL and ess_lo - xi <= ESS_TOL:
            break
    # lo keeps ESS >= xi; fall back to hi only if lo never advanced
    return lo if lo > tau else hi


def set_step(
    e: Ensemble,
    state: MutationState,
    v: np.ndarray,
    tau: float,
    tau_next: float,
    model,
    n_sweeps: int,
    seed: int,
    temp_index: int,
):
    """One transform step: reweight-and-transport, then mutate.

    The ensemble transform composes the Bayes reweighting for the increment
    with an optimal-transport map back to uniform weights; the moved
    particles are then re-evaluated once and mutated for ``n_sweeps``
    sweeps at the new temperature.  Returns the new ensemble, mutation
    state, potential cache, and the pooled acceptance rate.
    """
    e = apply_bayes_transform(e, v, tau_next - tau)
    v = model.potential(e.positions)
    state = refresh_statistics(state, e)
    for sweep in range(n_sweeps):
        rng = stream(seed, MUTATE, temp_index, sweep)
        e, state, v = mh_step(state, e, tau_next, model, rng, v=v)
    rate = state.acceptance_rate
    if state.proposed > 0:
        state = adapt_rho(state)
    return e, state, v, rate


def smc_step(
    e: Ensemble,
    state: MutationState,
    v: np.ndarray,
    tau: float,
    tau_next: float,
    model,
    n_sweeps: int,
    seed: int,
    temp_index: int,
    resample=None,
):
    """One resampling step: reweight, resample, then mutate.

    Resampling copies existing particles, so their cached potentials are
    gathered rather than recomputed.
    """
    if resample is None:
        resample = get_scheme("stratified")
    weights = reweight(e, v, tau_next - tau).weights()
    idx = resample(weights, stream(seed, RESAMPLE, temp_index))
    e = Ensemble.equal_weights(e.positions[idx])
    v = v[idx]
    state = refresh_statistics(state, e)
    for sweep in range(n_sweeps):
        rng = stream(seed, MUTATE, temp_index, sweep)
        e, state, v = mh_step(state, e, tau_next, model, rng, v=v)
    rate = state.acceptance_rate
    if state.proposed > 0:
        state = adapt_rho(state)
    return e, state, v, rate


def run(
    model,
    method: str = "set",
    n_particles: int = 256,
    n_sweeps: int = 5,
    xi: float = 0.5,
    seed: int = 0,
    scheme: str = "stratified",
    max_temperatures: int = 1000,
) -> RunReport:
    """Temper an ensemble from the initial law to the posterior.

    ``method`` selects how weights are flattened after each reweighting:
    ``"set"`` moves particles by discrete optimal transport, ``"smc"``
    resamples them (``scheme`` picks the resampler).  The run is a
    deterministic function of all arguments.

    Raises
    ------
    WeightCollapse
        If the ladder stalls before reaching temperature 1.
    """
    method = str(method).lower()
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if n_particles < 2:
        raise ValueError("need at least two particles")
    if n_sweeps < 0:
        raise ValueError("n_sweeps must be nonnegative")
    if not 0.0 < xi < 1.0:
        raise ValueError(f"xi must lie in (0, 1), got {xi}")
    resample = get_scheme(scheme)

    t_start = time.perf_counter()
    base_evals = model.n_potential_evals
    e = Ensemble.equal_weights(model.initial_sample(n_particles, stream(seed, INIT)))
    v = model.potential(e.positions)
    state = initial_state(e.dimension)

    tau = 0.0
    records = []
    for temp_index in range(1, max_temperatures + 1):
        tau_next = next_temperature(v, tau, xi)
        ess_accept = tempered_ess(v, tau_next - tau)
        rho_used = state.rho
        if method == "set":
            e, state, v, rate = set_step(
                e, state, v, tau, tau_next, model, n_sweeps, seed, temp_index
            )
        else:
            e, state, v, rate = smc_step(
                e, state, v, tau, tau_next, model, n_sweeps, seed, temp_index, resample
            )
        records.append(
            TemperatureRecord(
                tau=tau_next,
                ess=ess_accept,
                rho=rho_used,
                acceptance_rate=rate,
                n_solves=model.n_potential_evals - base_evals,
            )
        )
        tau = tau_next
        if tau >= 1.0:
            break
    else:
        raise WeightCollapse(
            f"temperature ladder stalled at tau={tau!r} after "
            f"{max_temperatures} steps; the incremental weights degenerate "
            f"too fast for xi={xi}"
        )

    report = RunReport(
        method=method,
        n_particles=n_particles,
        n_sweeps=n_sweeps,
        xi=xi,
        seed=seed,
        records=tuple(records),
        ensemble=e,
        wall_time=time.perf_counter() - t_start,
    )
    report.schedule  # construct once so ladder invariants are checked
    return report
