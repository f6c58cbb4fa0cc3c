"""Unit tests for the exact discrete transport solver and ensemble transform."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import permutation_minimum, vertex_minimum
from setsmc.ensemble import Ensemble, weighted_mean
from setsmc.errors import MarginalMismatch
from setsmc.transport import (
    CostMatrix,
    apply_bayes_transform,
    build_cost_matrix,
    ensemble_transform,
    save_coupling_csv,
    solve_discrete_ot,
)


def uniform(n):
    return np.full(n, 1.0 / n)


# ---------------------------------------------------------------- costs


def test_cost_matrix_two_atoms_1d():
    c = build_cost_matrix(np.array([[0.0], [3.0]]))
    np.testing.assert_array_equal(c.entries, [[0.0, 9.0], [9.0, 0.0]])


def test_cost_matrix_two_atoms_2d():
    c = build_cost_matrix(np.array([[0.0, 0.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(c.entries, [[0.0, 25.0], [25.0, 0.0]])


def test_cost_matrix_symmetric_zero_diagonal():
    x = np.random.default_rng(3).normal(size=(40, 5))
    c = build_cost_matrix(x).entries
    np.testing.assert_array_equal(c, c.T)
    np.testing.assert_array_equal(np.diag(c), np.zeros(40))
    assert (c >= 0).all()


def test_cost_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        build_cost_matrix(np.array([[np.nan], [0.0]]))
    with pytest.raises(ValueError):
        CostMatrix(np.array([[0.0, -1.0], [1.0, 0.0]]))


# ---------------------------------------------------------------- solver


def test_two_atom_unique_coupling():
    # moving all mass onto the first atom forces the coupling [[1/2,0],[1/2,0]]
    cost = build_cost_matrix(np.array([[0.0], [3.0]]))
    coupling = solve_discrete_ot(cost, uniform(2), np.array([1.0, 0.0]))
    np.testing.assert_allclose(
        coupling.to_dense(), [[0.5, 0.0], [0.5, 0.0]], atol=1e-15
    )
    assert coupling.objective == pytest.approx(4.5, abs=1e-12)


def test_three_atoms_on_a_line():
    # atoms 0,1,2; target halves the mass on the first two: optimum moves
    # 1/6 from atom 1 to 0 and 1/3 from atom 2 to 1, cost 1/6 + 1/3 = 1/2
    cost = build_cost_matrix(np.array([[0.0], [1.0], [2.0]]))
    beta = np.array([0.5, 0.5, 0.0])
    coupling = solve_discrete_ot(cost, uniform(3), beta)
    assert coupling.objective == pytest.approx(0.5, abs=1e-12)
    assert coupling.objective == pytest.approx(
        vertex_minimum(cost.entries, uniform(3), beta), abs=1e-12
    )


def test_single_atom():
    coupling = solve_discrete_ot(
        build_cost_matrix(np.array([[2.0]])), np.ones(1), np.ones(1)
    )
    np.testing.assert_array_equal(coupling.to_dense(), [[1.0]])
    assert coupling.objective == 0.0


def test_identity_when_target_equals_source():
    # zero diagonal and distinct atoms make the diagonal coupling the
    # unique optimum, so the plan must be exactly diag(alpha)
    rng = np.random.default_rng(11)
    x = rng.normal(size=(25, 3))
    alpha = uniform(25)
    coupling = solve_discrete_ot(build_cost_matrix(x), alpha, alpha.copy())
    np.testing.assert_array_equal(coupling.to_dense(), np.diag(alpha))
    assert coupling.objective == 0.0


def test_marginal_mismatch_raises():
    cost = build_cost_matrix(np.array([[0.0], [1.0]]))
    with pytest.raises(MarginalMismatch):
        solve_discrete_ot(cost, np.array([0.6, 0.6]), uniform(2))
    with pytest.raises(MarginalMismatch):
        solve_discrete_ot(cost, uniform(2), np.array([0.9, 0.0]))
    with pytest.raises(MarginalMismatch):
        solve_discrete_ot(cost, uniform(2), np.array([1.2, -0.2]))


def test_matches_permutation_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        x = rng.normal(size=(n, int(rng.integers(1, 4))))
        cost = build_cost_matrix(x)
        coupling = solve_discrete_ot(cost, uniform(n), uniform(n))
        assert coupling.objective == pytest.approx(
            permutation_minimum(cost.entries), abs=1e-10
        )


def test_matches_vertex_enumeration_oracle():
    rng = np.random.default_rng(6)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        x = rng.normal(size=(n, 2))
        alpha = rng.random(n) + 0.05
        alpha /= alpha.sum()
        beta = rng.random(n) + 0.05
        beta /= beta.sum()
        cost = build_cost_matrix(x)
        coupling = solve_discrete_ot(cost, alpha, beta)
        assert coupling.objective == pytest.approx(
            vertex_minimum(cost.entries, alpha, beta), abs=1e-9
        )


def test_certificate_fields_on_random_solves():
    rng = np.random.default_rng(7)
    for n in (2, 7, 33, 120):
        x = rng.normal(size=(n, 3))
        alpha = uniform(n)
        beta = rng.random(n) + 0.01
        beta /= beta.sum()
        coupling = solve_discrete_ot(build_cost_matrix(x), alpha, beta)
        assert coupling.support_size <= 2 * n - 1
        assert (coupling.masses > 0).all()
        np.testing.assert_allclose(coupling.row_marginals, alpha, atol=1e-9)
        np.testing.assert_allclose(coupling.col_marginals, beta, atol=1e-9)
        u, v = coupling.dual_potentials
        c = build_cost_matrix(x).entries
        # dual feasibility everywhere, equality on the support
        assert (u[:, None] + v[None, :] - c).max() <= 1e-9
        np.testing.assert_allclose(
            u[coupling.rows] + v[coupling.cols],
            c[coupling.rows, coupling.cols],
            atol=1e-9,
        )
        assert coupling.objective <= float(alpha @ c @ beta) + 1e-12


def test_objective_below_independence_coupling():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        x = rng.normal(size=(n, 2))
        beta = rng.random(n) + 0.01
        beta /= beta.sum()
        c = build_cost_matrix(x)
        coupling = solve_discrete_ot(c, uniform(n), beta)
        independence = float(uniform(n) @ c.entries @ beta)
        assert coupling.objective <= independence + 1e-12


def test_deterministic_rerun():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(60, 4))
    beta = rng.random(60)
    beta /= beta.sum()
    cost = build_cost_matrix(x)
    first = solve_discrete_ot(cost, uniform(60), beta)
    second = solve_discrete_ot(cost, uniform(60), beta)
    np.testing.assert_array_equal(first.rows, second.rows)
    np.testing.assert_array_equal(first.cols, second.cols)
    np.testing.assert_array_equal(first.masses, second.masses)
    assert first.objective == second.objective
    assert first.n_pivots == second.n_pivots


def test_internal_validation_battery():
    # deep structural checks of the simplex basis after every pivot
    rng = np.random.default_rng(10)
    for _ in range(25):
        n = int(rng.integers(2, 25))
        x = rng.normal(size=(n, 2))
        beta = rng.random(n) + 0.01
        beta /= beta.sum()
        solve_discrete_ot(build_cost_matrix(x), uniform(n), beta, validate_every=1)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=2, max_value=5),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_uniform_marginals_match_permutation_oracle(n, seed):
    rng = np.random.default_rng(seed)
    cost = build_cost_matrix(rng.normal(size=(n, 2)))
    coupling = solve_discrete_ot(cost, uniform(n), uniform(n))
    assert coupling.objective == pytest.approx(
        permutation_minimum(cost.entries), abs=1e-10
    )


# ---------------------------------------------------------------- transform


def test_transform_collapse_onto_survivor():
    # target (1, 0): both particles end up exactly at the first position
    e = Ensemble.equal_weights(np.array([[0.0, 1.0], [3.0, 4.0]]))
    out = ensemble_transform(e, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(out.positions, [[0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(out.log_weights, e.log_weights)


def test_bayes_transform_zero_step_is_identity():
    e = Ensemble.equal_weights(np.random.default_rng(0).normal(size=(9, 2)))
    out = apply_bayes_transform(e, np.random.default_rng(1).normal(size=9), 0.0)
    np.testing.assert_array_equal(out.positions, e.positions)


def test_bayes_transform_constant_potential_is_identity():
    e = Ensemble.equal_weights(np.random.default_rng(2).normal(size=(17, 3)))
    out = apply_bayes_transform(e, np.full(17, -4.2), 0.7)
    np.testing.assert_array_equal(out.positions, e.positions)


def test_bayes_transform_huge_gap_moves_all_to_survivor():
    e = Ensemble.equal_weights(np.array([[1.0], [5.0]]))
    out = apply_bayes_transform(e, np.array([0.0, -1e6]), 1.0)
    np.testing.assert_array_equal(out.positions, [[1.0], [1.0]])


def test_transform_preserves_weights_and_mean():
    rng = np.random.default_rng(12)
    for n in (3, 16, 80):
        e = Ensemble.equal_weights(rng.normal(size=(n, 3)))
        beta = rng.random(n) + 0.01
        beta /= beta.sum()
        out = ensemble_transform(e, beta)
        np.testing.assert_array_equal(out.log_weights, e.log_weights)
        # transformed weighted mean equals the reweighted mean
        np.testing.assert_allclose(
            weighted_mean(out), beta @ e.positions, atol=1e-9
        )


def test_transform_outputs_inside_hull_box():
    rng = np.random.default_rng(13)
    e = Ensemble.equal_weights(rng.normal(size=(50, 4)))
    beta = rng.random(50)
    beta /= beta.sum()
    out = ensemble_transform(e, beta)
    lo = e.positions.min(axis=0)
    hi = e.positions.max(axis=0)
    assert (out.positions >= lo[None, :]).all()
    assert (out.positions <= hi[None, :]).all()


def test_transform_rejects_wrong_beta_shape():
    e = Ensemble.equal_weights(np.zeros((4, 1)))
    with pytest.raises(ValueError):
        ensemble_transform(e, np.full(5, 0.2))


# ---------------------------------------------------------------- csv


def test_coupling_csv_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    x = rng.normal(size=(12, 2))
    beta = rng.random(12)
    beta /= beta.sum()
    coupling = solve_discrete_ot(build_cost_matrix(x), uniform(12), beta)
    path = tmp_path / "coupling.csv"
    save_coupling_csv(coupling, path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = list(reader)
    assert header == ["i", "j", "mass"]
    assert len(body) == coupling.support_size
    for k, row in enumerate(body):
        assert int(row[0]) == coupling.rows[k]
        assert int(row[1]) == coupling.cols[k]
        assert float(row[2]) == coupling.masses[k]
