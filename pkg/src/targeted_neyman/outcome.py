"""Outcome regression and the TMLE fluctuation step."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, design, make_basis
from .bregman import RieszWeightPair
from .data import Dataset, DgpSpec
from .errors import DataValidationError, DegenerateFluctuationError

__all__ = ["OutcomeModel", "fit_outcome", "tmle_update", "score_residual"]


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    """Regression ``mu(d, x)``.

    A fitted model is linear on an arm-indexed basis. A TMLE-updated model
    wraps its initial model and adds ``fluctuation_eps * alpha(d, x)``.
    """

    basis: BasisSpec | None = None
    coef: np.ndarray | None = None
    fitted_by: str = "least-squares"
    base: "OutcomeModel | None" = None
    fluctuation_eps: float | None = None
    riesz: RieszWeightPair | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def from_dgp(cls, dgp: DgpSpec) -> "OutcomeModel":
        basis = make_basis("raw+intercept", dgp.k, arm_indexed=True)
        coef = np.concatenate([dgp.outcome_coefs_treated, dgp.outcome_coefs_control])
        return cls(basis, coef, fitted_by="oracle")

    @classmethod
    def from_constants(cls, mu1: float, mu0: float, k: int = 1) -> "OutcomeModel":
        return cls(make_basis("one-hot-arm", k), np.array([mu1, mu0], dtype=np.float64),
                   fitted_by="constant")

    @property
    def is_updated(self) -> bool:
        return self.base is not None

    def predict(self, d, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.base is not None:
            return self.base.predict(d, X) + self.fluctuation_eps * self.riesz.alpha(d, X)
        return design(self.basis, d, X) @ self.coef


def fit_outcome(ds: Dataset, basis: BasisSpec, ridge: float = 1e-8) -> OutcomeModel:
    """Least squares of ``Y`` on ``Phi(D, X)``.

    A covariate-only basis is promoted to its arm-indexed form. If the design
    is rank deficient, a ridge penalty ``ridge * trace(Phi^T Phi) / p`` is
    added and a ``RuntimeWarning`` is issued.
    """
    if not basis.arm_indexed:
        basis = basis.with_arms(True)
    phi = design(basis, ds.d, ds.X)
    rank = int(np.linalg.matrix_rank(phi))
    info = {"rank": rank, "p": basis.p}
    if rank < basis.p:
        gram = phi.T @ phi
        delta = ridge * max(float(np.trace(gram)) / basis.p, 1.0)
        coef = np.linalg.solve(gram + delta * np.eye(basis.p), phi.T @ ds.y)
        info["notice"] = f"rank-deficient design ({rank} < {basis.p}); ridge {delta:.3e} added"
        warnings.warn(info["notice"], RuntimeWarning, stacklevel=2)
        fitted_by = "ridge"
    else:
        coef = np.linalg.lstsq(phi, ds.y, rcond=None)[0]
        fitted_by = "least-squares"
    return OutcomeModel(basis, coef, fitted_by=fitted_by, info=info)


def score_residual(model: OutcomeModel, ds: Dataset, alpha: RieszWeightPair) -> float:
    """``sum_i alpha(D_i, X_i) (Y_i - mu(D_i, X_i))``."""
    return float(alpha.unit_alpha(ds) @ (ds.y - model.predict(ds.d, ds.X)))


def tmle_update(model: OutcomeModel, ds: Dataset, alpha: RieszWeightPair) -> OutcomeModel:
    """One linear fluctuation of ``model`` along ``alpha``.

    ``eps = sum alpha_i (Y_i - mu_i) / sum alpha_i^2`` and
    ``mu_new(d, x) = mu(d, x) + eps * alpha(d, x)``, which makes the score
    residual ``sum alpha_i (Y_i - mu_new_i)`` vanish.
    """
    a = alpha.unit_alpha(ds)
    denom = float(a @ a)
    if not denom > 0:
        raise DegenerateFluctuationError("representer is identically zero on the sample")
    if not np.all(np.isfinite(a)):
        raise DataValidationError("representer is not finite on the sample")
    eps = float(a @ (ds.y - model.predict(ds.d, ds.X))) / denom
    updated = OutcomeModel(basis=model.basis, fitted_by=model.fitted_by, base=model,
                           fluctuation_eps=eps, riesz=alpha)
    updated.info["score_residual"] = score_residual(updated, ds, alpha)
    return updated
