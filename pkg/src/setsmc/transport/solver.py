"""Exact discrete optimal transport with per-solve optimality certificates.

The solver returns a sparse optimal coupling together with dual potentials
(u, v) satisfying u_i + v_j <= c_ij everywhere and equality on the support.
The potentials are reconstructed from the support graph after the simplex
finishes, independently of the solver internals, so a certificate failure
really means a wrong answer rather than bookkeeping drift.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from numba import njit

from setsmc.errors import MarginalMismatch, SolverFailure
from setsmc.transport._netsimplex import (
    STATUS_ITER_LIMIT,
    STATUS_OPTIMAL,
    solve_dense,
)

__all__ = [
    "CostMatrix",
    "Coupling",
    "build_cost_matrix",
    "solve_discrete_ot",
    "save_coupling_csv",
]

# all certificates are absolute tolerances on probability-mass inputs
MARGINAL_TOL = 1e-9
DUAL_FEAS_TOL = 1e-9
OBJECTIVE_GAP_TOL = 1e-9
MASS_DROP = 1e-15


@dataclass(frozen=True)
class CostMatrix:
    """Dense pairwise transport costs, squared-distance units."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError("cost entries must be a 2-d array")
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise ValueError("cost entries must be finite and nonnegative")
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self):
        return self.entries.shape


@njit(cache=True, fastmath=True)
def _pairwise_sq(xt, out):
    # per-dimension squared differences accumulated row by row; (i, j) and
    # (j, i) run the identical instruction sequence on negated differences,
    # so the result is exactly symmetric with an exactly zero diagonal and
    # nonnegative entries.  Returns the matrix maximum so the caller can
    # detect overflow without a second pass.
    d, n = xt.shape
    mx = 0.0
    for i in range(n):
        x0 = xt[0, i]
        for j in range(n):
            dv = xt[0, j] - x0
            out[i, j] = dv * dv
        for k in range(1, d):
            xk = xt[k, i]
            for j in range(n):
                dv = xt[k, j] - xk
                out[i, j] += dv * dv
        out[i, i] = 0.0
        for j in range(n):
            if out[i, j] > mx:
                mx = out[i, j]
    return mx


def build_cost_matrix(positions: np.ndarray) -> CostMatrix:
    """Pairwise squared Euclidean distances between rows of ``positions``.

    The diagonal is exactly zero and the matrix exactly symmetric, which the
    transform relies on when source and target share the same support.
    """
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("positions must be finite")
    c = np.empty((x.shape[0], x.shape[0]), dtype=float)
    mx = _pairwise_sq(np.ascontiguousarray(x.T), c)
    if not np.isfinite(mx):
        raise ValueError("squared distances overflow")
    # entries are finite, nonnegative and symmetric by construction, so the
    # validating constructor is bypassed
    cm = object.__new__(CostMatrix)
    object.__setattr__(cm, "entries", c)
    return cm


@dataclass(frozen=True)
class Coupling:
    """Sparse optimal coupling plus its optimality certificate.

    rows/cols/masses list the support entries; dual_potentials is the pair
    (u, v) with u_i + v_j <= c_ij and equality on the support; objective is
    the certified transport cost.
    """

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    dual_potentials: tuple
    objective: float
    n_pivots: int = field(default=0, compare=False)

    @property
    def support_size(self) -> int:
        return int(self.masses.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.row_marginals.size, self.col_marginals.size))
        out[self.rows, self.cols] = self.masses
        return out


def _as_cost_array(cost) -> np.ndarray:
    if isinstance(cost, CostMatrix):
        return cost.entries
    return CostMatrix(np.asarray(cost)).entries


def _check_marginal(w: np.ndarray, name: str) -> np.ndarray:
    w = np.ascontiguousarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise MarginalMismatch(f"{name} must be a nonempty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise MarginalMismatch(f"{name} must be finite and nonnegative")
    total = math.fsum(w.tolist())
    if abs(total - 1.0) > 1e-12:
        raise MarginalMismatch(f"{name} must sum to 1 within 1e-12, got {total!r}")
    return w


def _support_duals(c: np.ndarray, rows, cols, masses, alpha, beta):
    """Rebuild dual potentials from the support graph.

    Within each connected component of the bipartite support graph the
    equalities u_i + v_j = c_ij fix (u, v) up to one constant; components
    are then shifted against each other so that u_i + v_j <= c_ij holds
    globally (a tiny difference-constraint system over components).
    """
    m, n = c.shape
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)

    row_adj = [[] for _ in range(m)]
    col_adj = [[] for _ in range(n)]
    for k in range(len(rows)):
        row_adj[rows[k]].append(cols[k])
        col_adj[cols[k]].append(rows[k])

    comp_row = np.full(m, -1, dtype=int)
    comp_col = np.full(n, -1, dtype=int)
    n_comp = 0
    for start in range(m):
        if comp_row[start] >= 0 or not row_adj[start]:
            continue
        comp_row[start] = n_comp
        u[start] = 0.0
        queue = deque([(0, start)])  # (0=row, 1=col)
        while queue:
            kind, node = queue.popleft()
            if kind == 0:
                for j in row_adj[node]:
                    if comp_col[j] < 0:
                        comp_col[j] = n_comp
                        v[j] = c[node, j] - u[node]
                        queue.append((1, j))
            else:
                for i in col_adj[node]:
                    if comp_row[i] < 0:
                        comp_row[i] = n_comp
                        u[i] = c[i, node] - v[node]
                        queue.append((0, i))
        n_comp += 1

    if n_comp > 1:
        # offsets sigma_k per component: shifting rows by +sigma and columns
        # by -sigma preserves support equalities; cross-component feasibility
        # becomes sigma_A - sigma_B <= min rc(A rows, B cols)
        w = np.full((n_comp, n_comp), np.inf)
        active_cols = comp_col >= 0
        cc = comp_col[active_cols]
        for i in range(m):
            if comp_row[i] < 0:
                continue
            rc_row = c[i, active_cols] - u[i] - v[active_cols]
            np.minimum.at(w[comp_row[i]], cc, rc_row)
        dist = np.zeros(n_comp)
        for _ in range(n_comp):
            changed = False
            for a_ in range(n_comp):
                for b_ in range(n_comp):
                    if w[a_, b_] < np.inf and dist[b_] > dist[a_] + w[a_, b_]:
                        dist[b_] = dist[a_] + w[a_, b_]
                        changed = True
            if not changed:
                break
        else:
            raise SolverFailure("inconsistent dual offsets: coupling not optimal")
        sigma = -dist
        for i in range(m):
            if comp_row[i] >= 0:
                u[i] += sigma[comp_row[i]]
        for j in range(n):
            if comp_col[j] >= 0:
                v[j] -= sigma[comp_col[j]]

    # nodes without support mass: tightest feasible values
    iso_rows = np.isnan(u)
    iso_cols = np.isnan(v)
    if iso_cols.all():
        raise SolverFailure("empty coupling support")
    if iso_rows.any():
        u[iso_rows] = np.min(c[np.ix_(iso_rows, ~iso_cols)] - v[~iso_cols], axis=1)
    if iso_cols.any():
        v[iso_cols] = np.min(c[:, iso_cols] - u[:, None], axis=0)
    return u, v


def _verify_certificate(c, rows, cols, masses, alpha, beta, u, v, objective):
    m, n = c.shape
    if masses.size > m + n - 1:
        raise SolverFailure(
            f"support size {masses.size} exceeds basic bound {m + n - 1}"
        )
    if masses.size and masses.min() <= 0:
        raise SolverFailure("nonpositive mass in coupling support")

    row_sum = np.bincount(rows, weights=masses, minlength=m)
    col_sum = np.bincount(cols, weights=masses, minlength=n)
    err_r = np.max(np.abs(row_sum - alpha)) if m else 0.0
    err_c = np.max(np.abs(col_sum - beta)) if n else 0.0
    if err_r > MARGINAL_TOL or err_c > MARGINAL_TOL:
        raise SolverFailure(
            f"marginal feasibility violated: row {err_r:.3e}, col {err_c:.3e}"
        )

    # complementary slackness on the support
    if masses.size:
        slack = np.abs(c[rows, cols] - u[rows] - v[cols])
        if slack.max() > DUAL_FEAS_TOL:
            raise SolverFailure(
                f"complementary slackness violated by {slack.max():.3e}"
            )

    # dual feasibility over all pairs, in row blocks to bound memory
    worst = 0.0
    step = max(1, int(2**22) // max(n, 1))
    for i0 in range(0, m, step):
        blk = c[i0 : i0 + step] - u[i0 : i0 + step, None] - v[None, :]
        low = blk.min()
        if low < worst:
            worst = low
    if worst < -DUAL_FEAS_TOL:
        raise SolverFailure(f"dual feasibility violated by {-worst:.3e}")

    dual_obj = math.fsum((alpha * u).tolist()) + math.fsum((beta * v).tolist())
    if abs(objective - dual_obj) > OBJECTIVE_GAP_TOL * max(1.0, abs(objective)):
        raise SolverFailure(
            f"duality gap {objective - dual_obj:.3e} exceeds tolerance"
        )


def solve_discrete_ot(cost, alpha, beta, *, validate_every: int = 0) -> Coupling:
    """Exact minimizer of sum C_ij c_ij over couplings of (alpha, beta).

    Every solve is certified: marginal feasibility, dual feasibility,
    complementary slackness and the primal/dual objective match are checked
    before the coupling is returned; violations raise SolverFailure.
    ``validate_every`` > 0 additionally runs deep structural checks of the
    simplex basis every that many pivots (slow; meant for tests).
    """
    c = _as_cost_array(cost)
    m, n = c.shape
    alpha = _check_marginal(alpha, "alpha")
    beta = _check_marginal(beta, "beta")
    if alpha.size != m or beta.size != n:
        raise MarginalMismatch(
            f"marginal sizes ({alpha.size}, {beta.size}) do not match "
            f"cost shape {c.shape}"
        )

    # rebalance the tiny normalization mismatch so the flow problem is
    # exactly balanced; certificates still compare against the caller's beta
    s_a = math.fsum(alpha.tolist())
    s_b = math.fsum(beta.tolist())
    beta_bal = beta * (s_a / s_b)

    max_iter = max(200 * (m + n), 20_000)
    refresh = m + n
    rows, cols, flows, k, art_residual, status, n_pivots = solve_dense(
        c, alpha, beta_bal, 1e-10, max_iter, refresh, validate_every
    )
    if status == STATUS_ITER_LIMIT:
        raise SolverFailure(f"pivot limit {max_iter} reached")
    if status != STATUS_OPTIMAL:
        raise SolverFailure(f"simplex failed with status {status}")
    if art_residual > 1e-11:
        raise SolverFailure(
            f"artificial arcs kept {art_residual:.3e} mass: unbalanced problem"
        )

    rows, cols, flows = rows[:k], cols[:k], flows[:k]
    keep = flows > MASS_DROP
    rows, cols, flows = rows[keep], cols[keep], flows[keep]
    order = np.lexsort((cols, rows))
    rows, cols, flows = rows[order], cols[order], flows[order]

    objective = math.fsum((flows * c[rows, cols]).tolist())
    u, v = _support_duals(c, rows, cols, flows, alpha, beta)
    _verify_certificate(c, rows, cols, flows, alpha, beta, u, v, objective)

    return Coupling(
        rows=rows,
        cols=cols,
        masses=flows,
        row_marginals=alpha,
        col_marginals=beta,
        dual_potentials=(u, v),
        objective=objective,
        n_pivots=int(n_pivots),
    )


def save_coupling_csv(coupling: Coupling, path) -> None:
    """Dump the coupling support as sparse triplets ``i, j, mass``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "mass"])
        for i, j, mass in zip(coupling.rows, coupling.cols, coupling.masses):
            writer.writerow([int(i), int(j), repr(float(mass))])
