import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import optimize

from targeted_neyman import (KL, SQUARED, Dataset, FitConfig, RieszWeightPair,
                             bregman_pointwise, empirical_objective, fit_riesz, make_basis)
from targeted_neyman.basis import design
from targeted_neyman.bregman import get_convex
from targeted_neyman.errors import ConvergenceError, DataValidationError, DomainError

from conftest import fixture_dataset, random_instance


def mp_bregman_kl(a, b):
    """High-precision oracle straight from the generator definition."""
    mpmath.mp.dps = 50
    g = lambda t: (abs(t) - 1) * mpmath.log(abs(t) - 1) - abs(t)  # noqa: E731
    a, b = mpmath.mpf(a), mpmath.mpf(b)
    return g(a) - g(b) - mpmath.diff(g, b) * (a - b)


def test_squared_pointwise():
    assert bregman_pointwise(SQUARED, 2.0, 1.0) == 1.0


@pytest.mark.parametrize("spec", [SQUARED, KL])
def test_self_divergence_is_zero(spec):
    assert bregman_pointwise(spec, 3.0, 3.0) == 0.0


def test_kl_pointwise_against_mpmath():
    expected = mp_bregman_kl(3, 2)
    assert float(expected) == pytest.approx(2 * np.log(2) - 1, rel=1e-15)
    assert bregman_pointwise(KL, 3.0, 2.0) == pytest.approx(float(expected), rel=1e-13)


@pytest.mark.parametrize("a,b", [(1.5, 7.0), (-2.0, -1.25), (10.0, 1.01)])
def test_kl_pointwise_other_points(a, b):
    assert bregman_pointwise(KL, a, b) == pytest.approx(float(mp_bregman_kl(a, b)), rel=1e-10)


@pytest.mark.parametrize("a,b", [(0.5, 2.0), (2.0, 1.0), (-3.0, 2.0)])
def test_kl_domain_errors(a, b):
    with pytest.raises(DomainError):
        bregman_pointwise(KL, a, b)


def test_get_convex():
    assert get_convex("kl") is KL
    with pytest.raises(DataValidationError):
        get_convex("hinge")


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0001, 50), st.floats(1.0001, 50), st.sampled_from([1.0, -1.0]))
def test_kl_divergence_nonnegative(a, b, sign):
    assert bregman_pointwise(KL, sign * a, sign * b) >= -1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100))
def test_squared_divergence_nonnegative(a, b):
    assert bregman_pointwise(SQUARED, a, b) >= 0.0


def _const_pair(c1, c0):
    return RieszWeightPair.from_functions(lambda X: np.full(len(X), c1),
                                          lambda X: np.full(len(X), c0))


def test_squared_objective_constant_weights():
    assert empirical_objective(SQUARED, _const_pair(1.0, 1.0), fixture_dataset()) == pytest.approx(-3.0)


def test_kl_objective_half_propensity():
    assert empirical_objective(KL, _const_pair(2.0, 2.0), fixture_dataset()) == pytest.approx(2.0)


def test_unit_obs_weights_are_identity():
    ds = fixture_dataset()
    pair = _const_pair(1.7, 2.2)
    a = empirical_objective(SQUARED, pair, ds)
    b = empirical_objective(SQUARED, pair, ds, FitConfig(obs_weights=np.ones(4)))
    assert a == b


def test_squared_fit_one_hot_fixture_and_grid_oracle():
    pair = fit_riesz(SQUARED, make_basis("one-hot-arm", 1), fixture_dataset())
    X = fixture_dataset().X[:1]
    w1, w0 = pair.w1(X)[0], pair.w0(X)[0]

    def f(c):
        return -2 * c[0] - 2 * c[1] + 0.75 * c[0] ** 2 + 0.25 * c[1] ** 2

    grid = np.linspace(0, 6, 6001)
    G1, G0 = np.meshgrid(grid, grid, indexing="ij")
    i, j = np.unravel_index(np.argmin(f((G1, G0))), G1.shape)
    assert abs(grid[i] - w1) <= 1e-3 and abs(grid[j] - w0) <= 1e-3
    ref = optimize.minimize(f, [grid[i], grid[j]], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14})
    np.testing.assert_allclose([w1, w0], ref.x, atol=1e-6)
    np.testing.assert_allclose([w1, w0], [4 / 3, 4], atol=1e-12)


def _intercept_ds(n1, n0):
    d = np.array([1] * n1 + [0] * n0)
    return Dataset(np.linspace(-1, 1, n1 + n0)[:, None], d, np.zeros(n1 + n0))


def test_kl_fit_balanced_arms():
    pair = fit_riesz(KL, make_basis("polynomial", 1, degree=0), _intercept_ds(3, 3))
    assert pair.beta[0] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(pair.unit_weights(_intercept_ds(3, 3)), 2.0, atol=1e-12)


def test_kl_fit_one_vs_three_root_oracle():
    ds = _intercept_ds(1, 3)
    pair = fit_riesz(KL, make_basis("polynomial", 1, degree=0), ds)
    t = optimize.brentq(lambda t: 3 * t ** 2 + 2 * t - 1, 0.0, 1.0, xtol=1e-15)
    assert np.exp(pair.beta[0]) == pytest.approx(t, rel=1e-9)
    np.testing.assert_allclose(pair.propensity(ds.X), 0.25, atol=1e-10)
    np.testing.assert_allclose(pair.unit_weights(ds), [4, 4 / 3, 4 / 3, 4 / 3], atol=1e-9)


@pytest.mark.parametrize("kind,basis", [
    ("squared", make_basis("raw+intercept", 2, arm_indexed=True)),
    ("kl", make_basis("raw+intercept", 2)),
])
def test_fit_gradient_vanishes_by_finite_differences(kind, basis, rng):
    ds = random_instance(rng, 40, 2)
    spec = get_convex(kind)
    cfg = FitConfig(lam=0.01)
    pair = fit_riesz(spec, basis, ds, cfg)
    build = RieszWeightPair.linear if kind == "squared" else RieszWeightPair.logistic
    h = 1e-5
    for j in range(basis.p):
        e = np.zeros(basis.p)
        e[j] = h
        up = empirical_objective(spec, build(pair.beta + e, basis), ds, cfg)
        dn = empirical_objective(spec, build(pair.beta - e, basis), ds, cfg)
        assert abs((up - dn) / (2 * h)) < 1e-6
    assert pair.info["objective"] == pytest.approx(empirical_objective(spec, pair, ds, cfg))


@pytest.mark.parametrize("kind", ["squared", "kl"])
def test_ridge_shrinks_coefficients(kind, rng):
    ds = random_instance(rng, 60, 3)
    basis = make_basis("raw+intercept", 3, arm_indexed=kind == "squared")
    norms = [np.linalg.norm(fit_riesz(get_convex(kind), basis, ds, FitConfig(lam=lam)).beta)
             for lam in (0.0, 0.01, 0.1, 1.0, 10.0)]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


def test_kl_weights_exceed_one(rng):
    ds = random_instance(rng, 80, 2)
    pair = fit_riesz(KL, make_basis("polynomial", 2, degree=2), ds)
    assert np.all(pair.w1(ds.X) > 1) and np.all(pair.w0(ds.X) > 1)
    e = pair.propensity(ds.X)
    np.testing.assert_allclose(pair.w1(ds.X), 1 / e, rtol=1e-12)
    np.testing.assert_allclose(pair.w0(ds.X), 1 / (1 - e), rtol=1e-12)


def test_loss_basis_mismatch_rejected(rng):
    ds = random_instance(rng, 10, 1)
    with pytest.raises(DataValidationError):
        fit_riesz(SQUARED, make_basis("raw", 1), ds)
    with pytest.raises(DataValidationError):
        fit_riesz(KL, make_basis("raw", 1, arm_indexed=True), ds)


def test_kl_nonconvergence_reports_gradient(rng):
    ds = random_instance(rng, 50, 2)
    with pytest.raises(ConvergenceError) as info:
        fit_riesz(KL, make_basis("raw+intercept", 2), ds, FitConfig(max_iters=1, grad_tol=1e-300))
    assert info.value.diagnostics()["grad_norm"] > 0
    assert info.value.diagnostics()["iterations"] == 1


def test_kl_separable_data_does_not_converge():
    ds = Dataset(np.array([[-1.0], [-0.5], [0.5], [1.0]]), np.array([0, 0, 1, 1]), np.zeros(4))
    with pytest.raises(ConvergenceError):
        fit_riesz(KL, make_basis("raw+intercept", 1), ds, FitConfig(max_iters=50))


def test_singular_squared_system_falls_back_with_notice():
    basis = make_basis("polynomial", 1, degree=1, arm_indexed=True)
    d = np.array([1, 1, 0, 0])
    flat = Dataset(np.zeros((4, 1)), d, np.zeros(4))
    with pytest.warns(RuntimeWarning, match="minimum-norm"):
        pair = fit_riesz(SQUARED, basis, flat)
    assert pair.info["method"] == "lstsq"
    np.testing.assert_allclose(pair.unit_alpha(flat), [2, 2, -2, -2], atol=1e-10)
    spread = Dataset(np.array([[0.0], [1.0], [0.0], [1.0]]), d, np.zeros(4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert fit_riesz(SQUARED, basis, spread).info["method"] == "cholesky"


def test_squared_closed_form_matches_normal_equations(rng):
    ds = random_instance(rng, 30, 2)
    basis = make_basis("raw+intercept", 2, arm_indexed=True)
    pair = fit_riesz(SQUARED, basis, ds)
    Pd = design(basis, ds.d, ds.X)
    h = (design(basis, 1, ds.X) + design(basis, 0, ds.X)).sum(0)
    np.testing.assert_allclose(np.linalg.solve(Pd.T @ Pd, h), pair.beta, rtol=1e-9)
