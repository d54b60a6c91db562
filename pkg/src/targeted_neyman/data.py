"""Observation container, CSV interchange and synthetic data-generating processes."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DataValidationError

__all__ = [
    "Dataset",
    "DgpSpec",
    "DGP_PRESETS",
    "get_dgp",
    "load_csv",
    "write_csv",
    "simulate",
    "load_truth",
    "write_truth",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """n observations of covariates ``X`` (n, k), treatment ``d`` and outcome ``y``.

    Arrays are copied and made read-only on construction.
    """

    X: np.ndarray
    d: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataValidationError("covariates must be a 2-D array")
        d_raw = np.asarray(self.d)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        n = X.shape[0]
        if d_raw.ndim != 1 or d_raw.shape[0] != n or y.shape[0] != n:
            raise DataValidationError(
                f"length mismatch: X has {n} rows, d has {d_raw.size}, y has {y.size}"
            )
        if n < 2:
            raise DataValidationError(f"need at least 2 observations, got {n}")
        if X.shape[1] < 1:
            raise DataValidationError("need at least one covariate column")
        if not np.all(np.isin(d_raw, (0, 1))):
            bad = int(np.flatnonzero(~np.isin(d_raw, (0, 1)))[0])
            raise DataValidationError(f"treatment not binary at row {bad + 1}")
        d = d_raw.astype(np.int64)
        if d.min() == d.max():
            raise DataValidationError("degenerate treatment arm: all units are " +
                                      ("treated" if d[0] == 1 else "control"))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataValidationError("non-finite entries in covariates or outcomes")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def treated(self) -> np.ndarray:
        return self.d == 1

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def __repr__(self):
        return f"Dataset(n={self.n}, k={self.k}, n_treated={self.n_treated})"


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Linear-outcome, logistic-propensity DGP on ``X ~ Uniform[-1, 1]^k``.

    Coefficient vectors hold the intercept first. Since ``E[X] = 0`` the true
    ATE is the difference of the outcome intercepts.
    """

    name: str
    k: int
    propensity_coefs: np.ndarray
    outcome_coefs_treated: np.ndarray
    outcome_coefs_control: np.ndarray
    noise_sd: float = 1.0
    epsilon: float = 0.05

    def __post_init__(self):
        for attr in ("propensity_coefs", "outcome_coefs_treated", "outcome_coefs_control"):
            v = np.asarray(getattr(self, attr), dtype=np.float64).ravel()
            if v.shape != (self.k + 1,):
                raise DataValidationError(f"{attr} must have length k + 1 = {self.k + 1}")
            object.__setattr__(self, attr, _frozen(v))
        if self.k < 1:
            raise DataValidationError("k must be >= 1")
        if not (self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise DataValidationError("noise_sd must be finite and non-negative")
        if not 0 < self.epsilon < 0.5:
            raise DataValidationError("epsilon must lie in (0, 1/2)")
        lo, hi = self.propensity_bounds()
        if not (lo > self.epsilon and hi < 1 - self.epsilon):
            raise DataValidationError(
                f"propensity range [{lo:.4f}, {hi:.4f}] violates positivity band "
                f"({self.epsilon}, {1 - self.epsilon})"
            )

    @property
    def true_ate(self) -> float:
        return float(self.outcome_coefs_treated[0] - self.outcome_coefs_control[0])

    def propensity_bounds(self) -> tuple[float, float]:
        """Exact range of the propensity over the covariate cube."""
        c = self.propensity_coefs
        spread = float(np.abs(c[1:]).sum())
        return float(expit(c[0] - spread)), float(expit(c[0] + spread))

    def propensity(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return expit(self.propensity_coefs[0] + X @ self.propensity_coefs[1:])

    def mu(self, d, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        m1 = self.outcome_coefs_treated[0] + X @ self.outcome_coefs_treated[1:]
        m0 = self.outcome_coefs_control[0] + X @ self.outcome_coefs_control[1:]
        return np.where(np.asarray(d) == 1, m1, m0)

    def alpha(self, d, X: np.ndarray) -> np.ndarray:
        """True Riesz representer ``d / e(x) - (1 - d) / (1 - e(x))``."""
        e = self.propensity(X)
        d = np.asarray(d)
        return np.where(d == 1, 1.0 / e, -1.0 / (1.0 - e))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "propensity_coefs": self.propensity_coefs.tolist(),
            "outcome_coefs_treated": self.outcome_coefs_treated.tolist(),
            "outcome_coefs_control": self.outcome_coefs_control.tolist(),
            "noise_sd": self.noise_sd,
            "epsilon": self.epsilon,
            "true_ate": self.true_ate,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DgpSpec":
        return cls(
            name=obj["name"],
            k=int(obj["k"]),
            propensity_coefs=obj["propensity_coefs"],
            outcome_coefs_treated=obj["outcome_coefs_treated"],
            outcome_coefs_control=obj["outcome_coefs_control"],
            noise_sd=float(obj["noise_sd"]),
            epsilon=float(obj.get("epsilon", 0.05)),
        )


DGP_PRESETS: dict[str, DgpSpec] = {
    "linear-logit": DgpSpec(
        name="linear-logit",
        k=2,
        propensity_coefs=[0.2, 0.8, -0.6],
        outcome_coefs_treated=[2.0, 1.0, -0.5],
        outcome_coefs_control=[0.5, 0.8, 0.3],
        noise_sd=1.0,
        epsilon=0.1,
    ),
    "randomized": DgpSpec(
        name="randomized",
        k=2,
        propensity_coefs=[0.0, 0.0, 0.0],
        outcome_coefs_treated=[1.0, 0.5, 0.5],
        outcome_coefs_control=[0.0, 0.5, 0.5],
        noise_sd=1.0,
        epsilon=0.1,
    ),
    "strong-confounding": DgpSpec(
        name="strong-confounding",
        k=3,
        propensity_coefs=[-0.3, 1.2, -0.8, 0.5],
        outcome_coefs_treated=[1.0, 2.0, 1.0, -1.0],
        outcome_coefs_control=[0.0, -1.0, 1.5, 0.5],
        noise_sd=0.5,
        epsilon=0.02,
    ),
}


def get_dgp(name: str) -> DgpSpec:
    try:
        return DGP_PRESETS[name]
    except KeyError:
        raise DataValidationError(
            f"unknown DGP {name!r}; choose from {sorted(DGP_PRESETS)}"
        ) from None


def simulate(spec: DgpSpec, n: int, seed: int) -> tuple[Dataset, float]:
    """Draw ``n`` units from ``spec``; identical seeds give identical datasets.

    Raises :class:`DataValidationError` for ``n < 2`` or if a draw happens to
    leave one arm empty.
    """
    if n < 2:
        raise DataValidationError(f"invalid size: n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, spec.k))
    d = (rng.uniform(size=n) < spec.propensity(X)).astype(np.int64)
    noise = rng.standard_normal(n) * spec.noise_sd
    y = spec.mu(d, X) + noise
    return Dataset(X, d, y), spec.true_ate


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` with header ``y,d,x1..xk``; floats use round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "d"] + [f"x{j + 1}" for j in range(ds.k)])
        for i in range(ds.n):
            w.writerow([repr(float(ds.y[i])), int(ds.d[i])] +
                       [repr(float(v)) for v in ds.X[i]])


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataValidationError(
            f"non-numeric value {cell!r} at row {row}, column {col}"
        ) from None
    if not math.isfinite(v):
        raise DataValidationError(f"non-finite value {cell!r} at row {row}, column {col}")
    return v


def load_csv(path) -> Dataset:
    """Read a ``y,d,x1..xk`` CSV file into a :class:`Dataset`.

    Rows are numbered from 1 (first data row) in error messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError("malformed header: file is empty") from None
        k = len(header) - 2
        expected = ["y", "d"] + [f"x{j + 1}" for j in range(k)]
        if k < 1 or header != expected:
            raise DataValidationError(
                f"malformed header {','.join(header)!r}; expected 'y,d,x1,...,xk'"
            )
        ys, ds, xs = [], [], []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    f"row {r} has {len(row)} fields, expected {len(header)}"
                )
            ys.append(_parse_float(row[0], r, "y"))
            dv = _parse_float(row[1], r, "d")
            if dv not in (0.0, 1.0):
                raise DataValidationError(f"treatment not binary at row {r}")
            ds.append(int(dv))
            xs.append([_parse_float(c, r, header[j + 2]) for j, c in enumerate(row[2:])])
    if not ys:
        raise DataValidationError("file contains no data rows")
    X = np.array(xs, dtype=np.float64).reshape(len(ys), k)
    return Dataset(X, np.array(ds, dtype=np.int64), np.array(ys))


def write_truth(path, spec: DgpSpec, n: int, seed: int) -> None:
    obj = spec.to_dict()
    obj.update(n=n, seed=seed)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_truth(path) -> DgpSpec:
    return DgpSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
