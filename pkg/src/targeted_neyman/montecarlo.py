"""Monte Carlo replications over a simulated DGP."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import DgpSpec, simulate
from .errors import DataValidationError
from .estimators import Z_95
from .pipeline import fit_nuisances, run_estimator, run_recommended

__all__ = ["replication_seeds", "run_monte_carlo", "summarize"]


def replication_seeds(seed: int, reps: int) -> list[int]:
    """Independent per-replication seeds derived from one master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(reps, dtype=np.uint32)]


@dataclass(frozen=True)
class _RepTask:
    dgp: DgpSpec
    n: int
    seed: int
    estimators: tuple
    riesz: str
    basis: str
    degree: int
    lam: float
    use_residual_weights: bool
    M: int
    pipeline: str | None


def _one_rep(task: _RepTask) -> dict:
    ds, _ = simulate(task.dgp, task.n, task.seed)
    out = {}
    if task.pipeline == "recommended":
        rep = run_recommended(ds, task.basis, task.degree, task.lam)
        out["tmle"] = (rep.tau_hat, rep.std_error)
        return out
    nuis = None
    if any(e != "match" for e in task.estimators):
        nuis = fit_nuisances(ds, task.riesz, task.basis, task.degree, task.lam,
                             task.use_residual_weights, truth=task.dgp)
    for est in task.estimators:
        rep = run_estimator(ds, est, nuis, task.M)
        out[est] = (rep.tau_hat, rep.std_error)
    return out


def summarize(values: np.ndarray, ses: np.ndarray, truth: float) -> dict:
    """Bias, Monte Carlo standard error and normal-CI coverage."""
    reps = values.shape[0]
    sd = float(np.std(values, ddof=1)) if reps > 1 else float("nan")
    covered = np.abs(values - truth) <= Z_95 * ses
    return {
        "mean_tau_hat": float(np.mean(values)),
        "bias": float(np.mean(values) - truth),
        "mc_standard_error": float(sd / np.sqrt(reps)),
        "empirical_sd": sd,
        "mean_std_error": float(np.mean(ses)),
        "coverage95": float(np.mean(covered)),
    }


def run_monte_carlo(dgp: DgpSpec, n: int, reps: int, seed: int = 0,
                    estimators=("onestep", "tmle"), riesz: str = "kl-logistic",
                    basis: str = "raw+intercept", degree: int = 1, lam: float = 0.0,
                    use_residual_weights: bool = False, M: int = 1,
                    pipeline: str | None = None, jobs: int = 1) -> dict:
    """Run ``reps`` independent replications.

    Replication ``r`` uses ``replication_seeds(seed, reps)[r]``; results are
    aggregated in replication order regardless of ``jobs``.
    """
    if reps < 1:
        raise DataValidationError("reps must be >= 1")
    if jobs < 1:
        raise DataValidationError("jobs must be >= 1")
    if pipeline == "recommended":
        estimators = ("tmle",)
    tasks = [_RepTask(dgp, n, s, tuple(estimators), riesz, basis, degree, lam,
                      use_residual_weights, M, pipeline)
             for s in replication_seeds(seed, reps)]
    if jobs == 1:
        results = [_one_rep(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_rep, tasks))
    summary = {
        "dgp": dgp.name,
        "n": n,
        "reps": reps,
        "seed": seed,
        "true_ate": dgp.true_ate,
        "riesz": riesz,
        "estimators": {},
    }
    for est in estimators:
        vals = np.array([r[est][0] for r in results])
        ses = np.array([r[est][1] for r in results])
        summary["estimators"][est] = summarize(vals, ses, dgp.true_ate)
        summary["estimators"][est]["tau_hats"] = vals.tolist()
    return summary
