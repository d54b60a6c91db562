"""Feature maps for the Riesz and outcome models.

Two families are produced:

* covariate-only maps ``phi(x)`` (``arm_indexed=False``), used by the logistic
  / KL pathway;
* arm-indexed maps ``Phi(d, x) = [d * phi(x), (1 - d) * phi(x)]``
  (``arm_indexed=True``), used by the linear / squared-loss pathway and by the
  outcome regression.

The Voronoi basis is arm-indexed by construction: it has one indicator per
reference unit, active when the query lies in that unit's nearest-neighbour
cell among the reference units of the queried arm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations_with_replacement

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import DataValidationError

__all__ = [
    "BasisSpec",
    "BASIS_KINDS",
    "METRICS",
    "make_basis",
    "design",
    "eval_basis",
    "build_voronoi_basis",
]

BASIS_KINDS = ("raw", "raw+intercept", "polynomial", "one-hot-arm", "voronoi")
METRICS = ("standardized-euclidean", "euclidean")


@dataclass(frozen=True, eq=False)
class BasisSpec:
    kind: str
    k: int
    arm_indexed: bool = False
    degree: int = 1
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    # voronoi only: reference points already mapped into metric space
    ref_points: np.ndarray | None = None
    ref_arms: np.ndarray | None = None
    metric: str | None = None

    @property
    def base_dim(self) -> int:
        if self.kind == "raw":
            return self.k
        if self.kind == "raw+intercept":
            return self.k + 1
        if self.kind == "polynomial":
            return len(_monomials(self.k, self.degree))
        if self.kind == "one-hot-arm":
            return 1
        return self.ref_points.shape[0]

    @property
    def p(self) -> int:
        if self.kind == "voronoi" or not self.arm_indexed:
            return self.base_dim
        return 2 * self.base_dim

    def with_arms(self, arm_indexed: bool = True) -> "BasisSpec":
        if self.kind in ("one-hot-arm", "voronoi") and not arm_indexed:
            raise DataValidationError(f"{self.kind} basis is always arm-indexed")
        return replace(self, arm_indexed=arm_indexed)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "arm_indexed": self.arm_indexed, "p": self.p, "k": self.k}
        if self.kind == "polynomial":
            out["degree"] = self.degree
        if self.kind == "voronoi":
            out["metric"] = self.metric
        return out


def _monomials(k: int, degree: int) -> list[tuple[int, ...]]:
    terms: list[tuple[int, ...]] = []
    for deg in range(degree + 1):
        terms.extend(combinations_with_replacement(range(k), deg))
    return terms


def make_basis(kind: str, k: int, *, arm_indexed: bool = False, degree: int = 1,
               standardize_from: np.ndarray | None = None) -> BasisSpec:
    """Construct a non-Voronoi basis.

    ``standardize_from``, if given, z-scores covariates with that sample's
    column means and standard deviations before the feature map is applied.
    """
    if kind == "voronoi":
        raise DataValidationError("use build_voronoi_basis for the Voronoi basis")
    if kind not in BASIS_KINDS:
        raise DataValidationError(f"unknown basis kind {kind!r}")
    if k < 1:
        raise DataValidationError("k must be >= 1")
    if kind == "polynomial" and degree < 0:
        raise DataValidationError("polynomial degree must be >= 0")
    if kind == "one-hot-arm":
        arm_indexed = True
    center = scale = None
    if standardize_from is not None:
        Z = np.asarray(standardize_from, dtype=np.float64).reshape(-1, k)
        center = Z.mean(axis=0)
        scale = Z.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    return BasisSpec(kind=kind, k=k, arm_indexed=arm_indexed, degree=degree,
                     center=center, scale=scale)


def _to_metric_space(spec_center, spec_scale, X):
    if spec_center is None:
        return X
    return (X - spec_center) / spec_scale


def _base_features(spec: BasisSpec, X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    if spec.kind == "one-hot-arm":
        return np.ones((n, 1))
    Z = _to_metric_space(spec.center, spec.scale, X)
    if spec.kind == "raw":
        return Z.copy()
    if spec.kind == "raw+intercept":
        return np.hstack([np.ones((n, 1)), Z])
    cols = [np.prod(Z[:, list(t)], axis=1) if t else np.ones(n)
            for t in _monomials(spec.k, spec.degree)]
    return np.column_stack(cols)


def _as_arms(d, n: int) -> np.ndarray:
    dd = np.broadcast_to(np.asarray(d, dtype=np.int64), (n,))
    if not np.all((dd == 0) | (dd == 1)):
        raise DataValidationError("arm indicator must be 0 or 1")
    return dd


def design(spec: BasisSpec, d, X: np.ndarray) -> np.ndarray:
    """Evaluate ``Phi(d, x)`` row-wise; ``d`` is a scalar arm or an (n,) array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, spec.k) if spec.k > 1 else X[:, None]
    if X.shape[1] != spec.k:
        raise DataValidationError(
            f"dimension mismatch: basis expects k={spec.k}, got {X.shape[1]}"
        )
    n = X.shape[0]
    dd = _as_arms(d, n)
    if spec.kind == "voronoi":
        return _voronoi_design(spec, dd, X)
    F = _base_features(spec, X)
    if not spec.arm_indexed:
        return F
    t = dd[:, None].astype(np.float64)
    return np.hstack([t * F, (1.0 - t) * F])


def eval_basis(spec: BasisSpec, d: int, x) -> np.ndarray:
    """Feature vector for a single point ``x`` in arm ``d``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.shape[0] != spec.k:
        raise DataValidationError(
            f"dimension mismatch: basis expects k={spec.k}, got shape {x.shape}"
        )
    return design(spec, d, x[None, :])[0]


def build_voronoi_basis(reference: Dataset, metric: str = "standardized-euclidean") -> BasisSpec:
    """Indicator basis over the nearest-neighbour cells of ``reference``.

    Coordinate ``j`` of ``Phi(d, x)`` is 1 iff reference unit ``j`` belongs to
    arm ``d`` and is the nearest arm-``d`` reference unit to ``x``. Exact
    distance ties resolve to the lowest reference index.
    """
    if metric not in METRICS:
        raise DataValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    ref_d = np.asarray(reference.d, dtype=np.int64)
    if ref_d.min() == ref_d.max():
        raise DataValidationError("voronoi basis needs reference units in both arms")
    X = np.asarray(reference.X, dtype=np.float64)
    center = scale = None
    if metric == "standardized-euclidean":
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    pts = _to_metric_space(center, scale, X)
    pts.setflags(write=False)
    arms = ref_d.copy()
    arms.setflags(write=False)
    return BasisSpec(kind="voronoi", k=reference.k, arm_indexed=True, center=center,
                     scale=scale, ref_points=pts, ref_arms=arms, metric=metric)


def voronoi_cells(spec: BasisSpec, d, X: np.ndarray) -> np.ndarray:
    """Global reference index of the active cell for every query row."""
    X = np.asarray(X, dtype=np.float64).reshape(-1, spec.k)
    dd = _as_arms(d, X.shape[0])
    Q = _to_metric_space(spec.center, spec.scale, X)
    cell = np.empty(X.shape[0], dtype=np.int64)
    for arm in (0, 1):
        rows = np.flatnonzero(dd == arm)
        if rows.size == 0:
            continue
        members = np.flatnonzero(spec.ref_arms == arm)
        idx, _ = _kernels.knn(Q[rows], spec.ref_points[members], 1)
        cell[rows] = members[idx[:, 0]]
    return cell


def _voronoi_design(spec: BasisSpec, dd: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = np.zeros((X.shape[0], spec.p))
    out[np.arange(X.shape[0]), voronoi_cells(spec, dd, X)] = 1.0
    return out
