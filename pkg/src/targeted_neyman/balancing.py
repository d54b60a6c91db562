"""Dual covariate-balancing problems and balance diagnostics.

Stable balancing weights
    ``min ||alpha||^2`` subject to
    ``sum_i alpha_i Phi(D_i, X_i) = sum_i (Phi(1, X_i) - Phi(0, X_i))``
    for an arm-indexed basis; signed unit weights.
Entropy balancing
    ``min sum_i (w_i - 1) log(w_i - 1) - w_i`` over ``w_i > 1`` subject to
    ``sum_i D_i w_i phi(X_i) - (1 - D_i) w_i phi(X_i) = 0``
    for a covariate-only basis; positive unit weights on each unit's own arm.
    The linear ``- w_i`` term comes from the KL generator; without it the
    stationary weights differ from the tailored-loss fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .basis import BasisSpec, design
from .bregman import RieszWeightPair
from .data import Dataset
from .errors import ConvergenceError, DataValidationError, InfeasibleError

__all__ = [
    "BalanceReport",
    "UnitWeights",
    "balance_residual_sbw",
    "balance_residual_eb",
    "solve_sbw_dual",
    "solve_eb_dual",
    "weights_from_pair",
]


@dataclass(frozen=True, eq=False)
class BalanceReport:
    residuals: np.ndarray
    form: str
    basis: dict = field(default_factory=dict)

    @property
    def max_abs_violation(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0

    def to_dict(self) -> dict:
        return {
            "form": self.form,
            "residuals": [float(r) for r in self.residuals],
            "max_abs_violation": self.max_abs_violation,
            "basis": self.basis,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True, eq=False)
class UnitWeights:
    """Per-unit weights with their origin (``primal-fit``, ``dual-solve`` or
    ``matching``). ``signed`` weights carry the arm sign of the representer."""

    w: np.ndarray
    provenance: str
    signed: bool
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)):
            raise DataValidationError("unit weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def __len__(self):
        return self.w.shape[0]


def weights_from_pair(pair: RieszWeightPair, ds: Dataset, signed: bool) -> UnitWeights:
    w = pair.unit_alpha(ds) if signed else pair.unit_weights(ds)
    return UnitWeights(w, "primal-fit", signed)


def _values(weights, n: int) -> np.ndarray:
    w = weights.w if isinstance(weights, UnitWeights) else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise DataValidationError(f"weight vector has length {w.size}, data has {n}")
    return w


def balance_residual_sbw(ds: Dataset, alpha_units, basis: BasisSpec) -> BalanceReport:
    """``sum_i alpha_i Phi(D_i, X_i) - sum_i (Phi(1, X_i) - Phi(0, X_i))``."""
    if not basis.arm_indexed:
        raise DataValidationError("stable-balancing residual needs an arm-indexed basis")
    a = _values(alpha_units, ds.n)
    target = (design(basis, 1, ds.X) - design(basis, 0, ds.X)).sum(axis=0)
    res = design(basis, ds.d, ds.X).T @ a - target
    return BalanceReport(res, "sbw", basis.to_dict())


def balance_residual_eb(ds: Dataset, w, basis: BasisSpec) -> BalanceReport:
    """``sum_i D_i w_i phi(X_i) - sum_i (1 - D_i) w_i phi(X_i)`` for positive ``w``."""
    if basis.arm_indexed:
        raise DataValidationError("entropy-balancing residual needs a covariate-only basis")
    w = _values(w, ds.n)
    if np.any(w < 0):
        raise DataValidationError("entropy-balancing weights must be non-negative")
    sign = np.where(ds.d == 1, 1.0, -1.0)
    res = design(basis, 0, ds.X).T @ (sign * w)
    return BalanceReport(res, "eb", basis.to_dict())


def solve_sbw_dual(ds: Dataset, basis: BasisSpec, rtol: float = 1e-9) -> UnitWeights:
    """Minimum-norm signed weights meeting the stable-balancing constraint exactly.

    The KKT system ``[2I A^T; A 0] [alpha; nu] = [0; b]`` of this equality
    constrained QP is solved in its range-space form, ``alpha = A^T mu`` with
    ``A A^T mu = b``, through an SVD-based least-squares solve of ``A alpha = b``
    so that rank-deficient constraint matrices give the pseudo-inverse solution.

    Raises
    ------
    InfeasibleError
        The constraints are inconsistent; carries the numerical rank.
    """
    if not basis.arm_indexed:
        raise DataValidationError("stable balancing weights need an arm-indexed basis")
    A = design(basis, ds.d, ds.X).T
    b = (design(basis, 1, ds.X) - design(basis, 0, ds.X)).sum(axis=0)
    alpha, _, rank, _ = linalg.lstsq(A, b, lapack_driver="gelsd")
    violation = float(np.max(np.abs(A @ alpha - b)))
    if violation > rtol * max(1.0, float(np.max(np.abs(b)))):
        raise InfeasibleError(
            f"balance constraints inconsistent (rank {rank} of {basis.p}, "
            f"residual {violation:.3e})", rank=int(rank), p=basis.p)
    info = {"rank": int(rank), "p": basis.p, "rank_deficient": bool(rank < basis.p)}
    return UnitWeights(alpha, "dual-solve", True, info)


def _eb_residual(v, nu, A):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.concatenate([v + A.T @ nu, A @ (1.0 + np.exp(v))])


def solve_eb_dual(ds: Dataset, basis: BasisSpec, tol: float = 1e-10,
                  max_iters: int = 200) -> UnitWeights:
    """Entropy-balancing weights by infeasible-start Newton on the KKT system.

    Works directly in weight space, with ``n`` log-excess weights
    ``v = log(w - 1)`` plus ``p`` multipliers ``nu``. The log coordinates keep
    ``w > 1`` without step restrictions and stay accurate for weights just
    above 1. Each step eliminates the diagonal block and solves a ``p x p``
    system; backtracking on the KKT residual norm globalises it.
    ``info["multipliers"]`` holds ``nu`` with ``log(w_i - 1) = -s_i nu @ phi(X_i)``,
    ``s_i = 2 D_i - 1``.

    Raises
    ------
    ConvergenceError
        ``max_iters`` reached.
    InfeasibleError
        The line search stalls: no interior solution (arms separated by the basis).
    """
    if basis.arm_indexed:
        raise DataValidationError("entropy balancing needs a covariate-only basis")
    phi = design(basis, 0, ds.X)
    sign = np.where(ds.d == 1, 1.0, -1.0)
    A = (phi * sign[:, None]).T
    n, p = ds.n, basis.p
    v = np.zeros(n)
    nu = np.zeros(p)
    rnorm = float(np.linalg.norm(_eb_residual(v, nu, A)))
    stop = tol * max(1.0, n)
    it = 0
    while rnorm > stop:
        if it >= max_iters:
            raise ConvergenceError(
                f"entropy balancing did not converge (KKT residual {rnorm:.3e})", rnorm, it)
        it += 1
        u = np.exp(v)
        r1 = v + A.T @ nu
        r2 = A @ (1.0 + u)
        # dv = -r1 - A^T dnu;  A diag(u) dv = -r2
        S = (A * u) @ A.T
        rhs = r2 - A @ (u * r1)
        try:
            dnu = linalg.solve(S, rhs, assume_a="pos")
        except linalg.LinAlgError:
            dnu = linalg.lstsq(S, rhs)[0]
        dv = -r1 - A.T @ dnu
        t = 1.0
        while True:
            cand_v = v + t * dv
            cand_nu = nu + t * dnu
            cnorm = float(np.linalg.norm(_eb_residual(cand_v, cand_nu, A)))
            if np.isfinite(cnorm) and cnorm <= (1.0 - 0.01 * t) * rnorm:
                break
            t *= 0.5
            if t < 1e-14:
                raise InfeasibleError(
                    "no interior entropy-balancing solution: weights are driven to "
                    f"the boundary (KKT residual {rnorm:.3e})",
                    rank=int(np.linalg.matrix_rank(A)), p=p)
        v, nu, rnorm = cand_v, cand_nu, cnorm
    w = 1.0 + np.exp(v)
    info = {"iterations": it, "kkt_residual": rnorm, "multipliers": nu.tolist()}
    return UnitWeights(w, "dual-solve", False, info)
