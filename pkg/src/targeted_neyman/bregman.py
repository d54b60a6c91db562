"""Bregman-Riesz regression of the Riesz representer.

The representer is handled through two positive per-arm weight functions,
``w1(x) ~ 1 / e(x)`` and ``w0(x) ~ 1 / (1 - e(x))``, and the signed value is
assembled as ``alpha(d, x) = d * w1(x) - (1 - d) * w0(x)``.

Two losses are supported:

``squared``
    ``g(a) = (a - 1)^2`` with a linear model ``w_d(x) = beta @ Phi(d, x)`` on an
    arm-indexed basis. The empirical objective is quadratic in ``beta`` and is
    minimised in closed form.
``kl``
    ``g(a) = (|a| - 1) log(|a| - 1) - |a|`` with the logistic model
    ``e(x) = expit(beta @ phi(x))`` on a covariate-only basis. The empirical
    objective (the tailored loss) is smooth and convex in ``beta`` and is
    minimised by damped Newton.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.special import expit

from . import _kernels
from .basis import BasisSpec, design, make_basis
from .data import Dataset, DgpSpec
from .errors import ConvergenceError, DataValidationError, DomainError

__all__ = [
    "ConvexSpec",
    "SQUARED",
    "KL",
    "get_convex",
    "bregman_pointwise",
    "RieszWeightPair",
    "FitConfig",
    "empirical_objective",
    "fit_riesz",
]


@dataclass(frozen=True)
class ConvexSpec:
    kind: str
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]

    def check_domain(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        if self.kind == "kl" and np.any(np.abs(a) <= 1):
            raise DomainError("KL generator requires |a| > 1")
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite argument")
        return a


def _g_squared(a):
    return (np.asarray(a, dtype=np.float64) - 1.0) ** 2


def _dg_squared(a):
    return 2.0 * (np.asarray(a, dtype=np.float64) - 1.0)


def _g_kl(a):
    t = np.abs(np.asarray(a, dtype=np.float64))
    return (t - 1.0) * np.log(t - 1.0) - t


def _dg_kl(a):
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.log(np.abs(a) - 1.0)


SQUARED = ConvexSpec("squared", _g_squared, _dg_squared)
KL = ConvexSpec("kl", _g_kl, _dg_kl)


def get_convex(kind: str) -> ConvexSpec:
    if kind == "squared":
        return SQUARED
    if kind == "kl":
        return KL
    raise DataValidationError(f"unknown loss {kind!r}; expected 'squared' or 'kl'")


def bregman_pointwise(spec: ConvexSpec, a, b):
    """``g(a) - g(b) - g'(b) (a - b)``; elementwise over arrays.

    For the KL generator both arguments must satisfy ``|x| > 1`` and lie on
    the same sign branch, the region on which ``g`` is convex.
    """
    a = spec.check_domain(a)
    b = spec.check_domain(b)
    if spec.kind == "kl" and np.any(np.sign(a) != np.sign(b)):
        raise DomainError("KL divergence is defined within one sign branch")
    if spec.kind == "squared":
        out = (a - b) ** 2
    else:
        out = spec.g(a) - spec.g(b) - spec.dg(b) * (a - b)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class RieszWeightPair:
    """Per-arm positive weight functions and the signed representer they induce.

    ``loss_kind`` is ``"squared"`` or ``"kl"`` for fitted pairs, ``"oracle"``
    for the true representer of a simulated DGP, and ``"custom"`` for pairs
    built from arbitrary callables.
    """

    loss_kind: str
    w1: Callable[[np.ndarray], np.ndarray]
    w0: Callable[[np.ndarray], np.ndarray]
    beta: np.ndarray | None = None
    basis: BasisSpec | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def linear(cls, beta, basis: BasisSpec, info: dict | None = None) -> "RieszWeightPair":
        if not basis.arm_indexed:
            raise DataValidationError("linear Riesz model needs an arm-indexed basis")
        beta = np.array(beta, dtype=np.float64)
        return cls("squared",
                   lambda X: design(basis, 1, X) @ beta,
                   lambda X: design(basis, 0, X) @ beta,
                   beta, basis, dict(info or {}))

    @classmethod
    def logistic(cls, beta, basis: BasisSpec, info: dict | None = None,
                 loss_kind: str = "kl") -> "RieszWeightPair":
        if basis.arm_indexed:
            raise DataValidationError("logistic Riesz model needs a covariate-only basis")
        beta = np.array(beta, dtype=np.float64)

        def w1(X):
            return 1.0 + np.exp(-(design(basis, 0, X) @ beta))

        def w0(X):
            return 1.0 + np.exp(design(basis, 0, X) @ beta)

        return cls(loss_kind, w1, w0, beta, basis, dict(info or {}))

    @classmethod
    def from_dgp(cls, dgp: DgpSpec) -> "RieszWeightPair":
        """The true representer ``1/e0`` and ``1/(1 - e0)`` of a simulated DGP."""
        basis = make_basis("raw+intercept", dgp.k)
        return cls.logistic(dgp.propensity_coefs, basis, loss_kind="oracle")

    @classmethod
    def from_functions(cls, w1, w0) -> "RieszWeightPair":
        return cls("custom", w1, w0)

    def propensity(self, X) -> np.ndarray:
        if self.loss_kind in ("kl", "oracle") and self.beta is not None:
            return expit(design(self.basis, 0, X) @ self.beta)
        return 1.0 / np.asarray(self.w1(X))

    def alpha(self, d, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        d = np.broadcast_to(np.asarray(d), (X.shape[0],))
        return np.where(d == 1, self.w1(X), -np.asarray(self.w0(X)))

    def unit_alpha(self, ds: Dataset) -> np.ndarray:
        """Signed ``alpha(D_i, X_i)``."""
        return self.alpha(ds.d, ds.X)

    def unit_weights(self, ds: Dataset) -> np.ndarray:
        """Positive ``w_{D_i}(X_i)``, i.e. ``|alpha(D_i, X_i)|`` under the model."""
        return np.where(ds.d == 1, self.w1(ds.X), self.w0(ds.X))


@dataclass(frozen=True, eq=False)
class FitConfig:
    """Ridge coefficient ``lam`` (penalty ``lam * ||beta||^2``), optional
    per-observation weights multiplying each summand, and solver controls."""

    lam: float = 0.0
    obs_weights: np.ndarray | None = None
    max_iters: int = 500
    grad_tol: float = 1e-8
    init: np.ndarray | None = None

    def __post_init__(self):
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise DataValidationError("lambda must be finite and >= 0")
        if self.obs_weights is not None:
            w = np.array(self.obs_weights, dtype=np.float64).ravel()
            if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
                raise DataValidationError("observation weights must be finite and >= 0")
            w.setflags(write=False)
            object.__setattr__(self, "obs_weights", w)
        if self.max_iters < 1 or not self.grad_tol > 0:
            raise DataValidationError("max_iters must be >= 1 and grad_tol > 0")

    def weights_for(self, n: int) -> np.ndarray:
        if self.obs_weights is None:
            return np.ones(n)
        if self.obs_weights.shape[0] != n:
            raise DataValidationError(
                f"obs_weights has length {self.obs_weights.shape[0]}, data has {n}"
            )
        return self.obs_weights


def empirical_objective(spec: ConvexSpec, pair: RieszWeightPair, ds: Dataset,
                        cfg: FitConfig | None = None) -> float:
    """Sample objective of ``pair`` under ``spec`` plus the ridge term.

    squared: ``mean(-2 (w1 + w0) + D w1^2 + (1 - D) w0^2)``
    kl:      ``mean(D (log(w1 - 1) + w1) + (1 - D) (log(w0 - 1) + w0))``
    """
    cfg = cfg or FitConfig()
    if pair.loss_kind in ("squared", "kl") and pair.loss_kind != spec.kind:
        raise DataValidationError(
            f"pair was built for {pair.loss_kind!r} loss, objective is {spec.kind!r}"
        )
    omega = cfg.weights_for(ds.n)
    t = ds.d == 1
    w1 = np.asarray(pair.w1(ds.X), dtype=np.float64)
    w0 = np.asarray(pair.w0(ds.X), dtype=np.float64)
    if spec.kind == "squared":
        terms = -2.0 * (w1 + w0) + np.where(t, w1 ** 2, w0 ** 2)
    else:
        own = np.where(t, w1, w0)
        if np.any(own <= 1):
            raise DomainError("KL objective requires weights > 1")
        terms = np.log(own - 1.0) + own
    value = float(np.mean(omega * terms))
    if pair.beta is not None and cfg.lam > 0:
        value += cfg.lam * float(pair.beta @ pair.beta)
    return value


def fit_riesz(spec: ConvexSpec, basis: BasisSpec, ds: Dataset,
              cfg: FitConfig | None = None) -> RieszWeightPair:
    """Minimise the empirical objective over ``beta``.

    The returned pair carries ``info`` with ``grad_norm``, ``iterations``,
    ``objective`` and ``method``.

    Raises
    ------
    DataValidationError
        Loss and basis family do not match (squared needs an arm-indexed
        basis, kl a covariate-only one).
    ConvergenceError
        Newton iterations did not reach ``grad_tol`` within ``max_iters``.
    """
    cfg = cfg or FitConfig()
    if spec.kind == "squared":
        if not basis.arm_indexed:
            raise DataValidationError("squared loss requires an arm-indexed basis")
        return _fit_squared(basis, ds, cfg)
    if basis.arm_indexed:
        raise DataValidationError("kl loss requires a covariate-only basis")
    return _fit_kl(basis, ds, cfg)


_COND_LIMIT = 1e12


def _fit_squared(basis: BasisSpec, ds: Dataset, cfg: FitConfig) -> RieszWeightPair:
    n = ds.n
    omega = cfg.weights_for(n)
    phi_d = design(basis, ds.d, ds.X)
    phi_sum = design(basis, 1, ds.X) + design(basis, 0, ds.X)
    G = (phi_d * omega[:, None]).T @ phi_d / n + cfg.lam * np.eye(basis.p)
    h = phi_sum.T @ omega / n
    method = "cholesky"
    notice = None
    try:
        if np.linalg.cond(G) > _COND_LIMIT:
            raise linalg.LinAlgError("ill-conditioned")
        beta = linalg.solve(G, h, assume_a="pos")
    except linalg.LinAlgError:
        beta = linalg.lstsq(G, h)[0]
        method = "lstsq"
        notice = "normal equations ill-conditioned; used minimum-norm least squares"
        warnings.warn(notice, RuntimeWarning, stacklevel=3)
    grad = 2.0 * (G @ beta - h)
    # one refinement pass recovers digits lost to conditioning
    if np.linalg.norm(grad) > cfg.grad_tol:
        beta = beta - linalg.lstsq(G, grad / 2.0)[0]
        grad = 2.0 * (G @ beta - h)
    info = {"method": method, "iterations": 1, "grad_norm": float(np.linalg.norm(grad))}
    if notice:
        info["notice"] = notice
    pair = RieszWeightPair.linear(beta, basis, info)
    pair.info["objective"] = empirical_objective(SQUARED, pair, ds, cfg)
    return pair


def _kl_value(phi, beta, d, omega, lam, n):
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grad, hess = _kernels.tailored_terms(phi, phi @ beta, d, omega)
    value = loss / n + lam * float(beta @ beta)
    return value, grad / n + 2.0 * lam * beta, hess / n + 2.0 * lam * np.eye(beta.size)


def _fit_kl(basis: BasisSpec, ds: Dataset, cfg: FitConfig) -> RieszWeightPair:
    n = ds.n
    omega = cfg.weights_for(n)
    phi = design(basis, 0, ds.X)
    d = np.asarray(ds.d, dtype=np.int64)
    beta = np.zeros(basis.p) if cfg.init is None else np.array(cfg.init, dtype=np.float64)
    value, grad, hess = _kl_value(phi, beta, d, omega, cfg.lam, n)
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm > cfg.grad_tol:
        if it >= cfg.max_iters:
            raise ConvergenceError(
                f"Newton did not converge in {cfg.max_iters} iterations "
                f"(gradient norm {gnorm:.3e})", gnorm, it)
        it += 1
        try:
            step = -linalg.solve(hess, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = -linalg.lstsq(hess, grad)[0]
        slope = float(grad @ step)
        t = 1.0
        while t >= 1e-12:
            cand = beta + t * step
            cvalue, cgrad, chess = _kl_value(phi, cand, d, omega, cfg.lam, n)
            if np.isfinite(cvalue):
                if cvalue <= value + 1e-4 * t * slope:
                    break
                # near the optimum rounding swamps the decrease test
                if (cvalue <= value + 1e-12 * abs(value)
                        and np.linalg.norm(cgrad) <= 0.5 * gnorm):
                    break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"line search failed after {it} iterations (gradient norm {gnorm:.3e})",
                gnorm, it)
        beta, value, grad, hess = cand, cvalue, cgrad, chess
        gnorm = float(np.linalg.norm(grad))
    info = {"method": "newton", "iterations": it, "grad_norm": gnorm, "objective": value}
    return RieszWeightPair.logistic(beta, basis, info)
