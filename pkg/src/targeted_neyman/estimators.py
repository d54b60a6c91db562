"""ATE estimators, the Neyman orthogonal score and Neyman-error diagnostics.

The per-unit score is

    psi_i = alpha(D_i, X_i) (Y_i - mu(D_i, X_i)) + mu(1, X_i) - mu(0, X_i) - tau

and the Neyman error is its sample mean. Missing nuisances are read as zero:
``alpha = None`` drops the correction term, ``model = None`` sets ``mu = 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bregman import RieszWeightPair
from .data import Dataset, DgpSpec
from .errors import OracleUnavailableError
from .outcome import OutcomeModel, tmle_update

__all__ = [
    "EstimateReport",
    "NeymanDecomposition",
    "neyman_score",
    "neyman_error",
    "plugin_gap",
    "error_decomposition",
    "estimate_ipw",
    "estimate_plugin",
    "estimate_onestep",
    "estimate_tmle",
    "Z_95",
]

Z_95 = 1.96


@dataclass(frozen=True)
class NeymanDecomposition:
    """Terms of the exact identity
    ``neyman_error = -eq1 - eq2 + oracle_noise + cross_term`` where

    * ``eq1 = mean((alpha0 - alpha) (Y - mu0))``
    * ``eq2 = mean(tau - (mu(1, X) - mu(0, X)))``
    * ``oracle_noise = mean(alpha0 (Y - mu0))``
    * ``cross_term = mean(alpha (mu0(D, X) - mu(D, X)))``
    """

    eq1: float
    eq2: float
    oracle_noise: float
    cross_term: float
    neyman_error: float

    def reconstruct(self) -> float:
        return -self.eq1 - self.eq2 + self.oracle_noise + self.cross_term

    def to_dict(self) -> dict:
        return {"eq1_term": self.eq1, "eq2_term": self.eq2,
                "oracle_noise": self.oracle_noise, "cross_term": self.cross_term}


@dataclass(eq=False)
class EstimateReport:
    estimator: str
    tau_hat: float
    std_error: float
    neyman_error: float
    eq2_term: float
    se_kind: str = "score"
    eq1_term: float | None = None
    decomposition: dict | None = None
    balance: dict | None = None
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    # fitted objects, not serialised
    model: OutcomeModel | None = field(default=None, repr=False)
    riesz: RieszWeightPair | None = field(default=None, repr=False)

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.tau_hat - Z_95 * self.std_error, self.tau_hat + Z_95 * self.std_error)

    def to_dict(self) -> dict:
        out = {
            "estimator": self.estimator,
            "tau_hat": self.tau_hat,
            "std_error": self.std_error,
            "se_kind": self.se_kind,
            "ci95": list(self.ci95),
            "neyman_error": self.neyman_error,
            "eq2_term": self.eq2_term,
            "balance": self.balance,
            "notes": list(self.notes),
        }
        if self.eq1_term is not None:
            out["eq1_term"] = self.eq1_term
        if self.decomposition is not None:
            out["decomposition"] = self.decomposition
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _parts(ds: Dataset, model: OutcomeModel | None, alpha: RieszWeightPair | None):
    if model is None:
        zero = np.zeros(ds.n)
        mu_d, mu1, mu0 = zero, zero, zero
    else:
        mu_d = model.predict(ds.d, ds.X)
        mu1 = model.predict(1, ds.X)
        mu0 = model.predict(0, ds.X)
    a = np.zeros(ds.n) if alpha is None else alpha.unit_alpha(ds)
    return a, mu_d, mu1, mu0


def neyman_score(ds: Dataset, model: OutcomeModel | None, alpha: RieszWeightPair | None,
                 tau: float) -> np.ndarray:
    a, mu_d, mu1, mu0 = _parts(ds, model, alpha)
    return a * (ds.y - mu_d) + mu1 - mu0 - tau


def neyman_error(ds: Dataset, model: OutcomeModel | None, alpha: RieszWeightPair | None,
                 tau: float) -> float:
    """Sample mean of the Neyman orthogonal score."""
    a, mu_d, mu1, mu0 = _parts(ds, model, alpha)
    # summed as correction + plug-in so that tau_onestep cancels exactly
    return float(np.mean(a * (ds.y - mu_d)) + np.mean(mu1 - mu0) - tau)


def plugin_gap(ds: Dataset, model: OutcomeModel | None, tau: float) -> float:
    """``mean(tau - (mu(1, X) - mu(0, X)))``; needs no oracle."""
    _, _, mu1, mu0 = _parts(ds, model, None)
    return float(tau - np.mean(mu1 - mu0))


def error_decomposition(ds: Dataset, model: OutcomeModel | None,
                        alpha: RieszWeightPair | None, tau: float,
                        oracle: DgpSpec | None) -> NeymanDecomposition:
    """Split the Neyman error into representer error, plug-in gap and remainders.

    Raises
    ------
    OracleUnavailableError
        ``oracle`` is None; use :func:`plugin_gap` for the oracle-free term.
    """
    if oracle is None:
        raise OracleUnavailableError("representer error term needs the true DGP")
    a, mu_d, mu1, mu0 = _parts(ds, model, alpha)
    a0 = oracle.alpha(ds.d, ds.X)
    mu0_d = oracle.mu(ds.d, ds.X)
    return NeymanDecomposition(
        eq1=float(np.mean((a0 - a) * (ds.y - mu0_d))),
        eq2=float(tau - np.mean(mu1 - mu0)),
        oracle_noise=float(np.mean(a0 * (ds.y - mu0_d))),
        cross_term=float(np.mean(a * (mu0_d - mu_d))),
        neyman_error=neyman_error(ds, model, alpha, tau),
    )


def _se(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1) / np.sqrt(values.shape[0]))


def _report(kind, ds, tau, se, se_kind, model, alpha, **kw) -> EstimateReport:
    return EstimateReport(
        estimator=kind,
        tau_hat=float(tau),
        std_error=se,
        se_kind=se_kind,
        neyman_error=neyman_error(ds, model, alpha, tau),
        eq2_term=plugin_gap(ds, model, tau),
        model=model,
        riesz=alpha,
        **kw,
    )


def estimate_ipw(ds: Dataset, alpha: RieszWeightPair,
                 model: OutcomeModel | None = None) -> EstimateReport:
    """``mean(alpha(D_i, X_i) Y_i)``; naive standard error.

    ``model``, when given, is used only for the diagnostic terms.
    """
    contrib = alpha.unit_alpha(ds) * ds.y
    return _report("ipw", ds, np.mean(contrib), _se(contrib), "naive", model, alpha)


def estimate_plugin(ds: Dataset, model: OutcomeModel,
                    alpha: RieszWeightPair | None = None) -> EstimateReport:
    """``mean(mu(1, X_i) - mu(0, X_i))``; naive standard error.

    With ``alpha`` the reported Neyman error is the uncorrected bias term
    ``mean(alpha (Y - mu))``.
    """
    diff = model.predict(1, ds.X) - model.predict(0, ds.X)
    return _report("plugin", ds, np.mean(diff), _se(diff), "naive", model, alpha)


def estimate_onestep(ds: Dataset, model: OutcomeModel,
                     alpha: RieszWeightPair) -> EstimateReport:
    a, mu_d, mu1, mu0 = _parts(ds, model, alpha)
    correction = a * (ds.y - mu_d)
    plug = mu1 - mu0
    tau = np.mean(correction) + np.mean(plug)
    return _report("onestep", ds, tau, _se(correction + plug), "score", model, alpha)


def estimate_tmle(ds: Dataset, model: OutcomeModel,
                  alpha: RieszWeightPair) -> EstimateReport:
    """Fluctuate ``model`` along ``alpha`` and take the plug-in on the result.

    The updated model is available as ``report.model``.
    """
    updated = tmle_update(model, ds, alpha)
    a, mu_d, mu1, mu0 = _parts(ds, updated, alpha)
    plug = mu1 - mu0
    tau = np.mean(plug)
    score = a * (ds.y - mu_d) + plug
    rep = _report("tmle", ds, tau, _se(score), "score", updated, alpha)
    rep.extra["fluctuation_eps"] = updated.fluctuation_eps
    rep.extra["score_residual"] = updated.info["score_residual"]
    return rep
