"""Nearest-neighbour matching with replacement, as signed unit weights.

For ``M`` matches per unit, unit ``i`` receives weight
``(2 D_i - 1) (1 + K_M(i) / M)`` where ``K_M(i)`` counts how often ``i``
serves as a match. With ``M = 1`` these weights coincide with least-squares
Riesz regression on the Voronoi indicator basis built from the sample itself
(:func:`verify_matching_riesz_equivalence`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .balancing import UnitWeights
from .basis import METRICS, build_voronoi_basis
from .bregman import SQUARED, FitConfig, fit_riesz
from .data import Dataset
from .errors import DataValidationError
from .estimators import EstimateReport, _se

__all__ = [
    "MatchAssignment",
    "EquivalenceResult",
    "match_units",
    "matching_weights",
    "imputation_estimate",
    "estimate_matching",
    "verify_matching_riesz_equivalence",
]

_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class MatchAssignment:
    """``matches[i]`` lists the ``M`` opposite-arm units matched to unit ``i``
    (global indices, nearest first); ``counts[i]`` is ``K_M(i)``."""

    matches: np.ndarray
    counts: np.ndarray
    M: int
    metric: str
    ties: list = field(default_factory=list)

    @property
    def has_ties(self) -> bool:
        return bool(self.ties)


def _metric_space(X: np.ndarray, metric: str) -> np.ndarray:
    if metric not in METRICS:
        raise DataValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    if metric == "euclidean":
        return np.asarray(X, dtype=np.float64)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - X.mean(axis=0)) / scale


def match_units(ds: Dataset, M: int = 1,
                metric: str = "standardized-euclidean") -> MatchAssignment:
    """Match every unit to its ``M`` nearest opposite-arm units.

    Distances ties resolve to the lowest index; they are also recorded in
    ``ties`` as ``(unit, reason)`` pairs. Reasons: ``"nn-distance"`` (the
    M-th and (M+1)-th opposite-arm distances coincide),
    ``"duplicate-within-arm"`` and ``"duplicate-across-arms"``.
    """
    if M < 1:
        raise DataValidationError("M must be >= 1")
    if M > min(ds.n_treated, ds.n_control):
        raise DataValidationError(
            f"M={M} exceeds arm size (treated {ds.n_treated}, control {ds.n_control})"
        )
    Z = _metric_space(ds.X, metric)
    matches = np.empty((ds.n, M), dtype=np.int64)
    ties: list[tuple[int, str]] = []
    for arm in (1, 0):
        queries = np.flatnonzero(ds.d == arm)
        pool = np.flatnonzero(ds.d != arm)
        idx, dist2 = _kernels.knn(Z[queries], Z[pool], M)
        matches[queries] = pool[idx]
        if dist2.shape[1] > M:
            dm, dnext = dist2[:, M - 1], dist2[:, M]
            for q in np.flatnonzero(dnext - dm <= _TIE_RTOL * np.maximum(1.0, dm)):
                ties.append((int(queries[q]), "nn-distance"))
        for q in np.flatnonzero(dist2[:, 0] == 0.0):
            ties.append((int(queries[q]), "duplicate-across-arms"))
        if queries.size > 1:
            _, self_d = _kernels.knn(Z[queries], Z[queries], 1)
            for q in np.flatnonzero(self_d[:, 1] == 0.0):
                ties.append((int(queries[q]), "duplicate-within-arm"))
    counts = np.bincount(matches.ravel(), minlength=ds.n)
    return MatchAssignment(matches, counts, M, metric, sorted(set(ties)))


def matching_weights(assign: MatchAssignment, ds: Dataset, M: int | None = None) -> UnitWeights:
    """Signed weights ``(2 D_i - 1) (1 + K_M(i) / M)``."""
    M = assign.M if M is None else M
    if M != assign.M:
        raise DataValidationError(f"assignment was built with M={assign.M}, got M={M}")
    w = np.where(ds.d == 1, 1.0, -1.0) * (1.0 + assign.counts / M)
    return UnitWeights(w, "matching", True, {"M": M})


def imputation_estimate(assign: MatchAssignment, ds: Dataset) -> float:
    """``mean(Y_hat_i(1) - Y_hat_i(0))`` with the missing potential outcome
    imputed by the mean of the matched outcomes."""
    imputed = ds.y[assign.matches].mean(axis=1)
    y1 = np.where(ds.d == 1, ds.y, imputed)
    y0 = np.where(ds.d == 0, ds.y, imputed)
    return float(np.mean(y1 - y0))


def estimate_matching(ds: Dataset, M: int = 1,
                      metric: str = "standardized-euclidean") -> EstimateReport:
    assign = match_units(ds, M, metric)
    w = matching_weights(assign, ds)
    contrib = w.w * ds.y
    tau = float(np.mean(contrib))
    notes = ["naive standard error (sample dispersion of weighted outcomes)"]
    if assign.has_ties:
        notes.append(f"{len(assign.ties)} nearest-neighbour ties resolved by lowest index")
    return EstimateReport(
        estimator="matching",
        tau_hat=tau,
        std_error=_se(contrib),
        se_kind="naive",
        neyman_error=float(np.mean(contrib) - tau),
        eq2_term=tau,
        notes=notes,
        extra={"matches_per_unit": M, "metric": metric,
               "max_match_count": int(assign.counts.max())},
    )


@dataclass(frozen=True)
class EquivalenceResult:
    conclusive: bool
    equivalent: bool
    max_deviation: float
    notice: str = ""

    def to_dict(self) -> dict:
        return {"conclusive": self.conclusive, "equivalent": self.equivalent,
                "max_deviation": None if np.isnan(self.max_deviation) else self.max_deviation,
                "notice": self.notice}


def verify_matching_riesz_equivalence(ds: Dataset, metric: str = "standardized-euclidean",
                                      tol: float = 1e-6) -> EquivalenceResult:
    """Compare 1-NN matching weights with the Voronoi-basis Riesz fit.

    The fit is unpenalised squared-loss Riesz regression; its per-unit weights
    ``|alpha(D_i, X_i)|`` are compared with ``1 + K_1(i)``. Instances with
    ties are reported as inconclusive.
    """
    assign = match_units(ds, 1, metric)
    if assign.has_ties:
        reasons = sorted({r for _, r in assign.ties})
        return EquivalenceResult(False, False, float("nan"),
                                 f"inconclusive due to ties ({', '.join(reasons)})")
    basis = build_voronoi_basis(ds, metric)
    pair = fit_riesz(SQUARED, basis, ds, FitConfig(lam=0.0))
    match_alpha = matching_weights(assign, ds).w
    dev = float(np.max(np.abs(pair.unit_alpha(ds) - match_alpha)))
    return EquivalenceResult(True, dev <= tol, dev)
