"""Nuisance fitting and estimator dispatch shared by the CLI and Monte Carlo driver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .balancing import BalanceReport, balance_residual_eb, balance_residual_sbw
from .basis import BasisSpec, build_voronoi_basis, make_basis
from .bregman import KL, SQUARED, FitConfig, RieszWeightPair, fit_riesz
from .data import Dataset, DgpSpec
from .errors import DataValidationError
from .estimators import (
    EstimateReport,
    error_decomposition,
    estimate_ipw,
    estimate_onestep,
    estimate_plugin,
    estimate_tmle,
)
from .matching import estimate_matching
from .outcome import OutcomeModel, fit_outcome

__all__ = [
    "RIESZ_METHODS",
    "ESTIMATORS",
    "Nuisances",
    "fit_nuisances",
    "run_estimator",
    "estimate",
    "run_recommended",
]

RIESZ_METHODS = ("ls-linear", "kl-logistic", "matching", "oracle")
ESTIMATORS = ("ipw", "plugin", "onestep", "tmle", "match")


@dataclass(eq=False)
class Nuisances:
    model: OutcomeModel
    riesz: RieszWeightPair
    balance: BalanceReport | None = None
    notes: list = field(default_factory=list)


def _bases(kind: str, k: int, degree: int) -> tuple[BasisSpec, BasisSpec]:
    """(arm-indexed, covariate-only) versions of the requested basis family."""
    if kind == "one-hot-arm":
        return make_basis("one-hot-arm", k), make_basis("polynomial", k, degree=0)
    if kind == "voronoi":
        raise DataValidationError("voronoi basis is selected with --riesz matching")
    arm = make_basis(kind, k, arm_indexed=True, degree=degree)
    return arm, arm.with_arms(False)


def residual_weights(ds: Dataset, model: OutcomeModel) -> np.ndarray | None:
    """Squared outcome residuals scaled to mean one; None if all are zero."""
    r2 = (ds.y - model.predict(ds.d, ds.X)) ** 2
    m = float(r2.mean())
    return r2 / m if m > 0 else None


def fit_nuisances(ds: Dataset, riesz: str = "kl-logistic", basis: str = "raw+intercept",
                  degree: int = 1, lam: float = 1e-6, use_residual_weights: bool = False,
                  truth: DgpSpec | None = None,
                  metric: str = "standardized-euclidean") -> Nuisances:
    """Fit the outcome regression and the Riesz representer.

    The outcome model is least squares on the arm-indexed version of
    ``basis``. ``riesz`` selects the representer:

    ``ls-linear``   squared loss, linear model, arm-indexed basis
    ``kl-logistic`` tailored loss, logistic model, covariate-only basis
    ``matching``    squared loss on the sample's Voronoi basis (1-NN matching)
    ``oracle``      the true representer of ``truth``
    """
    if riesz not in RIESZ_METHODS:
        raise DataValidationError(f"unknown riesz method {riesz!r}")
    arm_basis, cov_basis = _bases(basis, ds.k, degree)
    model = fit_outcome(ds, arm_basis)
    notes = list(filter(None, [model.info.get("notice")]))
    obs_w = None
    if use_residual_weights:
        obs_w = residual_weights(ds, model)
        if obs_w is None:
            notes.append("outcome residuals are all zero; residual weights ignored")
    cfg = FitConfig(lam=lam, obs_weights=obs_w)

    if riesz == "ls-linear":
        pair = fit_riesz(SQUARED, arm_basis, ds, cfg)
        balance = balance_residual_sbw(ds, pair.unit_alpha(ds), arm_basis)
        low = int(np.sum(pair.unit_weights(ds) < 1.0))
        if low:
            notes.append(f"{low} fitted squared-loss weights below 1 (implied propensity > 1)")
    elif riesz == "kl-logistic":
        pair = fit_riesz(KL, cov_basis, ds, cfg)
        balance = balance_residual_eb(ds, pair.unit_weights(ds), cov_basis)
    elif riesz == "matching":
        vor = build_voronoi_basis(ds, metric)
        pair = fit_riesz(SQUARED, vor, ds, FitConfig(lam=0.0, obs_weights=obs_w))
        balance = balance_residual_sbw(ds, pair.unit_alpha(ds), vor)
    else:
        if truth is None:
            raise DataValidationError("--riesz oracle needs the DGP truth sidecar")
        pair = RieszWeightPair.from_dgp(truth)
        balance = balance_residual_eb(ds, pair.unit_weights(ds), pair.basis)
    if "notice" in pair.info:
        notes.append(pair.info["notice"])
    if use_residual_weights and riesz in ("kl-logistic", "ls-linear"):
        notes.append("balance residual is unweighted; the fit balances the "
                     "residual-weighted constraint")
    return Nuisances(model, pair, balance, notes)


def run_estimator(ds: Dataset, estimator: str, nuis: Nuisances | None, M: int = 1,
                  metric: str = "standardized-euclidean") -> EstimateReport:
    if estimator not in ESTIMATORS:
        raise DataValidationError(f"unknown estimator {estimator!r}")
    if estimator == "match":
        return estimate_matching(ds, M, metric)
    if estimator == "ipw":
        rep = estimate_ipw(ds, nuis.riesz, nuis.model)
    elif estimator == "plugin":
        rep = estimate_plugin(ds, nuis.model, nuis.riesz)
    elif estimator == "onestep":
        rep = estimate_onestep(ds, nuis.model, nuis.riesz)
    else:
        rep = estimate_tmle(ds, nuis.model, nuis.riesz)
    if nuis.balance is not None:
        rep.balance = nuis.balance.to_dict()
    rep.notes.extend(nuis.notes)
    if rep.se_kind == "naive":
        rep.notes.append("naive standard error")
    rep.extra["riesz"] = {"loss": nuis.riesz.loss_kind, **{
        k: v for k, v in nuis.riesz.info.items() if k in ("method", "iterations", "grad_norm")}}
    return rep


def _attach_truth(rep: EstimateReport, ds: Dataset, truth: DgpSpec | None) -> None:
    if truth is None:
        return
    rep.extra["true_ate"] = truth.true_ate
    if rep.riesz is None:
        return
    dec = error_decomposition(ds, rep.model, rep.riesz, rep.tau_hat, truth)
    rep.eq1_term = dec.eq1
    rep.decomposition = dec.to_dict()


def estimate(ds: Dataset, estimator: str = "tmle", riesz: str = "kl-logistic",
             basis: str = "raw+intercept", degree: int = 1, lam: float = 1e-6,
             use_residual_weights: bool = False, M: int = 1,
             metric: str = "standardized-euclidean",
             truth: DgpSpec | None = None) -> EstimateReport:
    """Fit nuisances and run one estimator; attach the decomposition when
    ``truth`` is available."""
    nuis = None
    if estimator != "match":
        nuis = fit_nuisances(ds, riesz, basis, degree, lam, use_residual_weights, truth, metric)
    rep = run_estimator(ds, estimator, nuis, M, metric)
    _attach_truth(rep, ds, truth)
    return rep


def run_recommended(ds: Dataset, basis: str = "raw+intercept", degree: int = 1,
                    lam: float = 1e-6, truth: DgpSpec | None = None) -> EstimateReport:
    """Outcome regression, logistic representer fitted by the residual-weighted
    tailored loss, then TMLE."""
    nuis = fit_nuisances(ds, "kl-logistic", basis, degree, lam,
                         use_residual_weights=True, truth=truth)
    rep = run_estimator(ds, "tmle", nuis)
    rep.extra["pipeline"] = "recommended"
    rep.extra["steps"] = [
        {"step": 1, "action": "fit outcome regression",
         "method": nuis.model.fitted_by, "basis": nuis.model.basis.to_dict()},
        {"step": 2, "action": "logistic Riesz model", "basis": nuis.riesz.basis.to_dict()},
        {"step": 3, "action": "residual-squared-weighted tailored loss",
         "lambda": lam, "iterations": nuis.riesz.info.get("iterations"),
         "grad_norm": nuis.riesz.info.get("grad_norm")},
        {"step": 4, "action": "TMLE fluctuation and plug-in",
         "fluctuation_eps": rep.extra["fluctuation_eps"],
         "score_residual": rep.extra["score_residual"]},
    ]
    _attach_truth(rep, ds, truth)
    return rep
