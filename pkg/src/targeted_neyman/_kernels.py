"""Hot numeric kernels.

Every kernel has a pure-numpy implementation and, when numba is importable, an
``@njit`` twin. The public names (``knn``, ``tailored_terms``) point at the
numba versions unless the environment variable
``TARGETED_NEYMAN_DISABLE_NUMBA`` is set to a truthy value (``1``, ``true``,
``yes``), in which case the numpy versions are used. Both variants are always
importable under explicit names so they can be compared in tests and in
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "HAS_NUMBA",
    "knn",
    "knn_numpy",
    "tailored_terms",
    "tailored_terms_numpy",
]

try:
    import numba as nb

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    HAS_NUMBA = False

_flag = os.environ.get("TARGETED_NEYMAN_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAS_NUMBA and _flag not in ("1", "true", "yes", "on")

# keeps the distance matrix of one block under ~64 MB
_BLOCK_ELEMS = 8_000_000


def knn_numpy(queries: np.ndarray, refs: np.ndarray, m: int):
    """Nearest reference rows for every query row.

    Parameters
    ----------
    queries : (nq, k) array
    refs : (nr, k) array
    m : int
        Number of neighbours to return, ``1 <= m <= nr``.

    Returns
    -------
    idx : (nq, m) int64 array
        Reference indices ordered by (squared distance, index), so exact
        ties go to the lowest reference index.
    dist2 : (nq, min(m + 1, nr)) float64 array
        The matching sorted squared distances, including one extra column
        (when available) so callers can detect ties at the m-th neighbour.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    nq, nr = queries.shape[0], refs.shape[0]
    keep = min(m + 1, nr)
    idx = np.empty((nq, m), dtype=np.int64)
    dist2 = np.empty((nq, keep), dtype=np.float64)
    block = max(1, _BLOCK_ELEMS // max(1, nr * max(1, refs.shape[1])))
    for start in range(0, nq, block):
        q = queries[start:start + block]
        d = ((q[:, None, :] - refs[None, :, :]) ** 2).sum(axis=2)
        order = np.argsort(d, axis=1, kind="stable")[:, :keep]
        idx[start:start + block] = order[:, :m]
        dist2[start:start + block] = np.take_along_axis(d, order, axis=1)
    return idx, dist2


def tailored_terms_numpy(phi: np.ndarray, eta: np.ndarray, d: np.ndarray, w: np.ndarray):
    """Weighted sums of the tailored loss, its gradient and its Hessian.

    With ``eta = phi @ beta`` the per-unit loss is
    ``d * (exp(-eta) - eta) + (1 - d) * (exp(eta) + eta) + 1``.
    Returned values are plain sums over units (no 1/n).
    """
    ep = np.exp(eta)
    em = np.exp(-eta)
    loss_i = np.where(d == 1, em - eta, ep + eta) + 1.0
    g_i = np.where(d == 1, -em - 1.0, ep + 1.0)
    h_i = np.where(d == 1, em, ep)
    loss = float(np.dot(w, loss_i))
    grad = phi.T @ (w * g_i)
    hess = (phi * (w * h_i)[:, None]).T @ phi
    return loss, grad, hess


if HAS_NUMBA:

    @nb.njit(cache=True)
    def knn_numba(queries, refs, m):
        nq, k = queries.shape
        nr = refs.shape[0]
        keep = min(m + 1, nr)
        idx = np.empty((nq, m), dtype=np.int64)
        dist2 = np.empty((nq, keep), dtype=np.float64)
        best_d = np.empty(keep, dtype=np.float64)
        best_i = np.empty(keep, dtype=np.int64)
        for q in range(nq):
            filled = 0
            for j in range(nr):
                s = 0.0
                for c in range(k):
                    diff = queries[q, c] - refs[j, c]
                    s += diff * diff
                if filled == keep and s >= best_d[keep - 1]:
                    continue
                # insertion keeps the earlier index ahead on exact ties
                pos = filled if filled < keep else keep - 1
                while pos > 0 and best_d[pos - 1] > s:
                    if pos < keep:
                        best_d[pos] = best_d[pos - 1]
                        best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = s
                best_i[pos] = j
                if filled < keep:
                    filled += 1
            for t in range(m):
                idx[q, t] = best_i[t]
            for t in range(keep):
                dist2[q, t] = best_d[t]
        return idx, dist2

    @nb.njit(cache=True)
    def _tailored_terms_nb(phi, eta, d, w):
        n, p = phi.shape
        grad = np.zeros(p)
        hess = np.zeros((p, p))
        loss = 0.0
        for i in range(n):
            e = eta[i]
            if d[i] == 1:
                em = np.exp(-e)
                li = em - e + 1.0
                gi = -em - 1.0
                hi = em
            else:
                ep = np.exp(e)
                li = ep + e + 1.0
                gi = ep + 1.0
                hi = ep
            wi = w[i]
            loss += wi * li
            for a in range(p):
                grad[a] += wi * gi * phi[i, a]
                ha = wi * hi * phi[i, a]
                for b in range(a, p):
                    hess[a, b] += ha * phi[i, b]
        for a in range(p):
            for b in range(a):
                hess[a, b] = hess[b, a]
        return loss, grad, hess

    def tailored_terms_numba(phi, eta, d, w):
        return _tailored_terms_nb(
            np.ascontiguousarray(phi, dtype=np.float64),
            np.ascontiguousarray(eta, dtype=np.float64),
            np.ascontiguousarray(d, dtype=np.int64),
            np.ascontiguousarray(w, dtype=np.float64),
        )

    def _knn_numba_entry(queries, refs, m):
        return knn_numba(
            np.ascontiguousarray(queries, dtype=np.float64),
            np.ascontiguousarray(refs, dtype=np.float64),
            int(m),
        )

else:  # pragma: no cover
    knn_numba = None
    tailored_terms_numba = None
    _knn_numba_entry = None


if USE_NUMBA:
    knn = _knn_numba_entry
    tailored_terms = tailored_terms_numba
else:
    knn = knn_numpy
    tailored_terms = tailored_terms_numpy
