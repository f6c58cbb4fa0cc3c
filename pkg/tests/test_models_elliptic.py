"""Forward solver, prior, and fixture checks for the diffusion inverse model."""

import json

import numpy as np
import pytest
from scipy.fft import idctn

from setsmc.errors import SolverFailure
from setsmc.models import EllipticInverse, make_synthetic_fixture
from setsmc.models.elliptic import FIXTURE_DIR, _interior_lattice


def small_model(n=10, **kw):
    pts = _interior_lattice(5)
    defaults = dict(noise_std=0.1)
    defaults.update(kw)
    return EllipticInverse(pts, np.zeros(25), n=n, **defaults)


# ---- constructor validation -------------------------------------------------

def test_rejects_bad_parameters():
    pts = _interior_lattice(5)
    z = np.zeros(25)
    with pytest.raises(ValueError):
        EllipticInverse(pts, z, noise_std=0.1, n=2)
    with pytest.raises(ValueError):
        EllipticInverse(pts, z, noise_std=0.1, bi=0.0)
    with pytest.raises(ValueError):
        EllipticInverse(pts, z, noise_std=0.0)
    with pytest.raises(ValueError):
        EllipticInverse(pts, z, noise_std=0.1, delta=0.0)
    with pytest.raises(ValueError):
        EllipticInverse(pts, z, noise_std=0.1, gamma=-1.0)
    with pytest.raises(ValueError):
        EllipticInverse(pts, z, noise_std=0.1, s=1.0)
    with pytest.raises(ValueError):
        EllipticInverse(np.array([[0.0, 0.5]]), np.zeros(1), noise_std=0.1)
    with pytest.raises(ValueError):
        EllipticInverse(pts, np.zeros(7), noise_std=0.1)


# ---- forward solver ----------------------------------------------------------

def test_discrete_conservation_on_random_fields():
    # with test function one, the unit inflow must balance the Robin outflow
    m = small_model()
    rng = np.random.default_rng(0)
    for _ in range(5):
        w = m.solve_forward(m.prior_sample(rng))
        inflow, outflow = m.boundary_flux_balance(w)
        assert inflow == pytest.approx(1.0, abs=1e-12)
        assert abs(inflow - outflow) < 1e-8

def test_mirror_symmetric_field_gives_mirror_symmetric_solution():
    m = small_model()
    n = m.n
    raw = np.random.default_rng(1).standard_normal((n, n))
    u = raw + raw[:, ::-1]  # symmetric about the vertical midline
    w = m.solve_forward(u.ravel()).reshape(n, n)
    assert np.abs(w - w[:, ::-1]).max() < 1e-10

def test_h_refinement_second_order_at_observation_points():
    pts = _interior_lattice(5)
    vals = {}
    for n in (8, 16, 32):
        m = EllipticInverse(pts, np.zeros(25), noise_std=1.0, n=n)
        g = np.linspace(0.0, 1.0, n)
        xx, yy = np.meshgrid(g, g, indexing="xy")
        u = 2.0 * np.sin(np.pi * xx) * np.sin(np.pi * yy)
        vals[n] = m.forward(u.ravel())
    order = np.log2(
        np.linalg.norm(vals[8] - vals[16]) / np.linalg.norm(vals[16] - vals[32])
    )
    assert 1.7 <= order <= 2.3

def test_solver_failure_on_overflowing_field():
    m = small_model()
    with pytest.raises(SolverFailure):
        m.solve_forward(np.full(m.dimension, 1e4))

def test_batch_potential_turns_failures_into_nan():
    m = small_model()
    rng = np.random.default_rng(2)
    z = np.vstack([m.sample_initial(rng), np.full(m.dimension, 1e6)])
    v = m.potential(z)
    assert np.isfinite(v[0])
    assert np.isnan(v[1])
    assert m.n_potential_evals == 2


# ---- observation operator -----------------------------------------------------

def test_observe_constant_field_is_exact():
    m = small_model()
    w = np.full(m.dimension, 3.25)
    assert np.allclose(m.observe(w), 3.25, atol=1e-13)

def test_observe_bilinear_function_is_exact():
    # x*y is bilinear on every cell, so interpolation reproduces it exactly
    m = small_model()
    g = np.linspace(0.0, 1.0, m.n)
    xx, yy = np.meshgrid(g, g, indexing="xy")
    w = (xx * yy).ravel()
    expect = m.observation_points[:, 0] * m.observation_points[:, 1]
    assert np.allclose(m.observe(w), expect, atol=1e-13)

def test_potential_zero_when_data_matches_forward_image():
    m = small_model()
    z = m.sample_initial(np.random.default_rng(3))
    exact = EllipticInverse(m.observation_points,
                            m.forward(m.field_from_coefficients(z)),
                            noise_std=0.1)
    assert exact.log_potential(z) == pytest.approx(0.0, abs=1e-18)

def test_potential_single_observation_formula():
    pts = np.array([[0.4, 0.6]])
    base = EllipticInverse(pts, np.zeros(1), noise_std=1.0)
    z = base.sample_initial(np.random.default_rng(4))
    g = base.forward(base.field_from_coefficients(z))[0]
    model = EllipticInverse(pts, np.array([g + 0.7]), noise_std=1.0)
    assert model.log_potential(z) == pytest.approx(-0.7**2 / 2.0, rel=1e-12)

def test_potential_monotone_in_residual_norm():
    m = small_model()
    z = m.sample_initial(np.random.default_rng(5))
    g = m.forward(m.field_from_coefficients(z))
    direction = np.ones_like(g) / np.sqrt(g.size)
    vals = []
    for r in (0.0, 0.5, 1.0, 2.0):
        shifted = EllipticInverse(m.observation_points, g + r * direction,
                                  noise_std=m.noise_std)
        vals.append(shifted.log_potential(z))
    assert all(a > b for a, b in zip(vals, vals[1:]))


# ---- prior and whitening -------------------------------------------------------

def test_gamma_zero_prior_is_iid_with_exact_density():
    m = small_model(gamma=0.0, delta=2.0, s=2.0)
    u = np.random.default_rng(6).standard_normal(m.dimension)
    # A = delta I, so the density is the iid Gaussian quadratic form
    expect = -0.5 * (2.0**2.0) * float(u @ u)
    assert m.prior_log_density(u + m.u0) == pytest.approx(expect, rel=1e-12)
    draws = np.vstack([m.prior_sample(np.random.default_rng(k))
                       for k in range(4000)])
    var = draws.var(axis=0).mean()
    assert var == pytest.approx(2.0**-2.0, rel=0.05)

def test_prior_density_quadratic_in_single_eigenmode():
    m = small_model()
    coeff = np.zeros((m.n, m.n))
    coeff[2, 3] = 1.0
    phi = idctn(coeff, type=2, norm="ortho").ravel()
    lam = m._prior_eigenvalues[2, 3]
    for c in (0.5, 1.0, 2.0):
        got = m.prior_log_density(m.u0 + c * phi)
        assert got == pytest.approx(-0.5 * lam**m.s * c * c, rel=1e-10)

def test_prior_sample_eigenmode_variances():
    m = small_model()
    rng = np.random.default_rng(7)
    draws = np.stack([(m.prior_sample(rng) - m.u0).reshape(m.n, m.n)
                      for _ in range(10_000)])
    from scipy.fft import dctn
    coeffs = dctn(draws, type=2, norm="ortho", axes=(1, 2))
    for (p, q) in ((0, 0), (1, 2), (4, 4), (9, 9)):
        got = coeffs[:, p, q].var()
        expect = m._prior_eigenvalues[p, q] ** -m.s
        assert got == pytest.approx(expect, rel=0.05)

def test_prior_sample_mean_near_u0():
    u0 = np.linspace(-1.0, 1.0, 100)
    m = small_model(u0=u0)
    rng = np.random.default_rng(8)
    draws = np.vstack([m.prior_sample(rng) for _ in range(10_000)])
    sd = draws.std(axis=0) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - u0) < 3.5 * sd)

def test_whitening_round_trip():
    m = small_model(u0=np.linspace(0.0, 1.0, 100))
    rng = np.random.default_rng(9)
    z = rng.standard_normal(m.dimension)
    back = m.coefficients_from_field(m.field_from_coefficients(z))
    assert np.abs(back - z).max() < 1e-10
    u = m.prior_sample(rng)
    again = m.field_from_coefficients(m.coefficients_from_field(u))
    assert np.abs(again - u).max() < 1e-10

def test_whitened_initial_law_is_standard_gaussian():
    # the coefficient map carries the field prior to an isotropic Gaussian,
    # so the two log-densities agree without any constant offset
    m = small_model()
    rng = np.random.default_rng(10)
    for _ in range(5):
        z = m.sample_initial(rng)
        assert m.log_initial_density(z) == pytest.approx(-0.5 * z @ z,
                                                         rel=1e-12)
        assert m.prior_log_density(m.field_from_coefficients(z)) == \
            pytest.approx(m.log_initial_density(z), rel=1e-10)


# ---- fixture -------------------------------------------------------------------

def test_fixture_roundtrip_and_determinism(tmp_path):
    man1 = make_synthetic_fixture(tmp_path / "a", seed=7)
    man2 = make_synthetic_fixture(tmp_path / "b", seed=7)
    assert man1 == man2
    for name in ("elliptic_manifest.json", "elliptic_observations.csv",
                 "elliptic_true_field.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()

    model = EllipticInverse.from_fixture(tmp_path / "a")
    assert model.dimension == 100
    assert model.data.shape == (25,)
    z_true = model.coefficients_from_field(model.true_field)
    assert np.isfinite(model.log_potential(z_true))

def test_packaged_fixture_matches_its_manifest():
    model = EllipticInverse.from_fixture()
    with open(FIXTURE_DIR / "elliptic_manifest.json") as fh:
        manifest = json.load(fh)
    assert model.n == manifest["n"]
    assert model.noise_std == manifest["noise_std"]
    assert model.data.size == manifest["n_observations"]
    clean_resid = model.data - model.forward(model.true_field)
    chi2 = float(clean_resid @ clean_resid) / model.noise_std**2
    assert 5.0 < chi2 < 60.0  # 25 degrees of freedom
