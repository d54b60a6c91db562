import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from targeted_neyman import (DgpSpec, OutcomeModel, RieszWeightPair, error_decomposition,
                             estimate_ipw, estimate_onestep, estimate_plugin, estimate_tmle,
                             fit_outcome, get_dgp, make_basis, neyman_error, neyman_score,
                             simulate, tmle_update)
from targeted_neyman.errors import OracleUnavailableError
from targeted_neyman.estimators import plugin_gap

from conftest import fixture_dataset, random_instance

ONE_HOT = make_basis("one-hot-arm", 1)
ALPHA = RieszWeightPair.linear([4 / 3, 4.0], ONE_HOT)
MU = OutcomeModel.from_constants(2.0, 1.0)


def test_ipw_fixture():
    assert estimate_ipw(fixture_dataset(), ALPHA).tau_hat == pytest.approx(-2.0, abs=1e-14)


def test_ipw_zero_outcomes():
    ds = fixture_dataset()
    zero = type(ds)(ds.X, ds.d, np.zeros(4))
    assert estimate_ipw(zero, ALPHA).tau_hat == 0.0


def test_ipw_oracle_large_sample():
    spec = get_dgp("linear-logit")
    ds, ate = simulate(spec, 100_000, seed=5)
    rep = estimate_ipw(ds, RieszWeightPair.from_dgp(spec))
    assert abs(rep.tau_hat - ate) < 3 * rep.std_error
    assert rep.se_kind == "naive"


@pytest.mark.parametrize("mu1,mu0,expected", [(2.0, 1.0, 1.0), (3.0, 3.0, 0.0)])
def test_plugin_constants(mu1, mu0, expected):
    rep = estimate_plugin(fixture_dataset(), OutcomeModel.from_constants(mu1, mu0))
    assert rep.tau_hat == expected


def test_plugin_on_tmle_updated_fixture():
    ds = fixture_dataset()
    rep = estimate_plugin(ds, tmle_update(MU, ds, ALPHA))
    assert rep.tau_hat == pytest.approx(-2.0, abs=1e-14)


def test_onestep_fixture():
    assert estimate_onestep(fixture_dataset(), MU, ALPHA).tau_hat == pytest.approx(-2.0, abs=1e-14)


def test_onestep_exact_nuisances_noiseless():
    spec = DgpSpec("exact", 2, [0.2, 0.5, -0.4], [1.7, 0.6, -0.2], [0.2, 0.6, -0.2], noise_sd=0.0)
    ds, ate = simulate(spec, 500, seed=8)
    rep = estimate_onestep(ds, OutcomeModel.from_dgp(spec), RieszWeightPair.from_dgp(spec))
    assert rep.tau_hat == pytest.approx(ate, abs=1e-12)


def test_onestep_zero_alpha_is_plugin(rng):
    ds = random_instance(rng, 30, 2)
    m = fit_outcome(ds, make_basis("raw+intercept", 2))
    zero = RieszWeightPair.linear(np.zeros(6), make_basis("raw+intercept", 2, arm_indexed=True))
    assert estimate_onestep(ds, m, zero).tau_hat == pytest.approx(estimate_plugin(ds, m).tau_hat,
                                                                  abs=1e-14)


def test_tmle_fixture_and_extras():
    rep = estimate_tmle(fixture_dataset(), MU, ALPHA)
    assert rep.tau_hat == pytest.approx(-2.0, abs=1e-14)
    assert rep.extra["fluctuation_eps"] == pytest.approx(-9 / 16)
    assert abs(rep.extra["score_residual"]) < 1e-13
    assert rep.model.is_updated


def test_tmle_with_zero_score_residual_equals_plugin():
    ds = fixture_dataset()
    m = fit_outcome(ds, ONE_HOT)
    assert estimate_tmle(ds, m, ALPHA).tau_hat == pytest.approx(estimate_plugin(ds, m).tau_hat,
                                                                abs=1e-14)


def _random_nuisances(seed):
    rng = np.random.default_rng(seed)
    ds = random_instance(rng, int(rng.integers(8, 60)), 2)
    alpha = RieszWeightPair.linear(rng.uniform(0.5, 3, 6),
                                   make_basis("raw+intercept", 2, arm_indexed=True))
    m = OutcomeModel(make_basis("raw+intercept", 2, arm_indexed=True), rng.normal(size=6))
    return ds, m, alpha


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_tmle_is_onestep_on_updated_model(seed):
    ds, m, alpha = _random_nuisances(seed)
    t = estimate_tmle(ds, m, alpha).tau_hat
    o = estimate_onestep(ds, tmle_update(m, ds, alpha), alpha).tau_hat
    assert abs(t - o) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_neyman_error_contract(seed, shift):
    ds, m, alpha = _random_nuisances(seed)
    tau = estimate_onestep(ds, m, alpha).tau_hat
    assert neyman_error(ds, m, alpha, tau) == 0.0
    assert neyman_error(ds, m, alpha, tau + 1.0) == pytest.approx(-1.0, abs=1e-13)
    lhs = neyman_error(ds, m, alpha, tau + shift)
    assert lhs == pytest.approx(-shift, abs=16 * np.spacing(max(abs(tau), abs(shift), 1.0)))


def test_neyman_error_fixture_tau_zero():
    assert neyman_error(fixture_dataset(), MU, ALPHA, 0.0) == pytest.approx(-2.0, abs=1e-14)
    assert np.mean(neyman_score(fixture_dataset(), MU, ALPHA, 0.0)) == pytest.approx(-2.0)


def _lin_dgp():
    return get_dgp("linear-logit")


def test_eq1_vanishes_at_true_alpha():
    spec = _lin_dgp()
    ds, _ = simulate(spec, 200, seed=1)
    m = fit_outcome(ds, make_basis("raw+intercept", 2))
    dec = error_decomposition(ds, m, RieszWeightPair.from_dgp(spec), 1.0, spec)
    assert dec.eq1 == pytest.approx(0.0, abs=1e-12)


def test_eq2_vanishes_at_plugin():
    spec = _lin_dgp()
    ds, _ = simulate(spec, 200, seed=2)
    m = fit_outcome(ds, make_basis("raw+intercept", 2))
    tau = estimate_plugin(ds, m).tau_hat
    assert plugin_gap(ds, m, tau) == pytest.approx(0.0, abs=1e-14)
    assert error_decomposition(ds, m, None, tau, spec).eq2 == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_decomposition_reproduced_term_by_term(seed):
    spec = _lin_dgp()
    ds, _ = simulate(spec, 300, seed=seed)
    m = fit_outcome(ds, make_basis("polynomial", 2, degree=2))
    alpha = RieszWeightPair.linear(np.random.default_rng(seed).uniform(1, 2, 12),
                                   make_basis("polynomial", 2, degree=2, arm_indexed=True))
    tau = 0.37 * seed
    dec = error_decomposition(ds, m, alpha, tau, spec)
    # direct evaluation from the raw ingredients
    e = 1 / (1 + np.exp(-(0.2 + ds.X @ np.array([0.8, -0.6]))))
    a0 = np.where(ds.d == 1, 1 / e, -1 / (1 - e))
    m1 = 2.0 + ds.X @ np.array([1.0, -0.5])
    m0 = 0.5 + ds.X @ np.array([0.8, 0.3])
    mu0_d = np.where(ds.d == 1, m1, m0)
    a = alpha.unit_alpha(ds)
    mu_d = m.predict(ds.d, ds.X)
    diff = m.predict(1, ds.X) - m.predict(0, ds.X)
    L = np.mean(a * (ds.y - mu_d) + diff - tau)
    assert dec.eq1 == pytest.approx(np.mean((a0 - a) * (ds.y - mu0_d)), abs=1e-12)
    assert dec.eq2 == pytest.approx(np.mean(tau - diff), abs=1e-12)
    assert dec.neyman_error == pytest.approx(L, abs=1e-12)
    assert dec.reconstruct() == pytest.approx(L, abs=1e-12)
    assert (-np.mean((a0 - a) * (ds.y - mu0_d)) - np.mean(tau - diff)
            + np.mean(a0 * (ds.y - mu0_d)) + np.mean(a * (mu0_d - mu_d))) == pytest.approx(L, abs=1e-12)


def test_decomposition_requires_oracle():
    with pytest.raises(OracleUnavailableError):
        error_decomposition(fixture_dataset(), MU, ALPHA, 0.0, None)


def test_report_serialises(rng):
    ds = random_instance(rng, 20, 1)
    rep = estimate_tmle(ds, OutcomeModel.from_constants(0.0, 0.0), ALPHA)
    obj = json.loads(rep.to_json())
    lo, hi = obj["ci95"]
    assert lo == pytest.approx(rep.tau_hat - 1.96 * rep.std_error)
    assert hi == pytest.approx(rep.tau_hat + 1.96 * rep.std_error)
    assert obj["se_kind"] == "score" and "fluctuation_eps" in obj
