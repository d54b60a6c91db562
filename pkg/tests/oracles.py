"""Independent reference solvers used only by tests."""

import cvxpy as cp
import numpy as np

from targeted_neyman.basis import design


def sbw_qp_oracle(ds, basis):
    """Equality-constrained least-norm QP solved by a conic solver."""
    A = design(basis, ds.d, ds.X).T
    b = (design(basis, 1, ds.X) - design(basis, 0, ds.X)).sum(axis=0)
    keep = np.linalg.svd(A, compute_uv=False) > 1e-10
    # drop redundant rows so the solver sees a full-rank system
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    r = int(keep.sum())
    A_r, b_r = (U[:, :r].T @ A), U[:, :r].T @ b
    a = cp.Variable(ds.n)
    cp.Problem(cp.Minimize(cp.sum_squares(a)), [A_r @ a == b_r]).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(a.value)


def eb_entropy_oracle(ds, basis):
    """``min sum (w-1) log(w-1) - w`` s.t. arm-signed balance, via exponential cones."""
    phi = design(basis, 0, ds.X)
    s = np.where(ds.d == 1, 1.0, -1.0)
    v = cp.Variable(ds.n)  # v = w - 1
    cons = [(phi * s[:, None]).T @ (v + 1) == 0]
    cp.Problem(cp.Minimize(cp.sum(-cp.entr(v)) - cp.sum(v)), cons).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
        max_iter=500)
    return np.asarray(v.value) + 1.0
