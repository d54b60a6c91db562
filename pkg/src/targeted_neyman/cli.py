"""Command-line interface.

Exit codes: 0 success, 1 validation error (bad flags, bad input files),
2 numerical failure (non-convergence, infeasible balance, degenerate
fluctuation). On failure a JSON error object is written to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .balancing import balance_residual_eb, balance_residual_sbw
from .basis import BASIS_KINDS, METRICS
from .data import DGP_PRESETS, get_dgp, load_csv, load_truth, simulate, write_csv, write_truth
from .errors import DataValidationError, DomainError, NumericalError
from .matching import match_units, matching_weights, verify_matching_riesz_equivalence
from .montecarlo import run_monte_carlo
from .pipeline import ESTIMATORS, RIESZ_METHODS, _bases, estimate, run_recommended
from .schemas import SCHEMAS

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error({"error": "UsageError", "message": message,
                     "usage": self.format_usage().strip()})
        sys.exit(EXIT_VALIDATION)


def _emit_error(obj: dict) -> None:
    sys.stderr.write(json.dumps(obj, indent=2) + "\n")


def _write_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def write_weights(path, w: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["w"])
        for v in w:
            writer.writerow([repr(float(v))])


def load_weights(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["w"]:
            raise DataValidationError("weights file must have the single header 'w'")
        vals = []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                vals.append(float(row[0]))
            except ValueError:
                raise DataValidationError(
                    f"non-numeric value {row[0]!r} at row {r}, column w") from None
    return np.array(vals)


def _truth_for(data_path: str, explicit: str | None):
    if explicit:
        return load_truth(explicit)
    p = Path(data_path)
    sidecar = p.with_name(p.stem + ".truth.json")
    return load_truth(sidecar) if sidecar.exists() else None


def cmd_simulate(args) -> int:
    spec = get_dgp(args.dgp)
    ds, _ = simulate(spec, args.n, args.seed)
    out = Path(args.out)
    write_csv(ds, out)
    truth = Path(args.truth_out) if args.truth_out else out.with_name(out.stem + ".truth.json")
    write_truth(truth, spec, args.n, args.seed)
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.reps is not None:
        if args.dgp is None or args.n is None:
            raise DataValidationError("--reps needs --dgp and --n")
        ests = ["tmle"] if args.pipeline else ([args.estimator] if args.estimator
                                               else ["onestep", "tmle"])
        summary = run_monte_carlo(
            get_dgp(args.dgp), args.n, args.reps, seed=args.seed,
            estimators=ests,
            riesz=args.riesz, basis=args.basis, degree=args.degree, lam=args.lam,
            use_residual_weights=args.residual_weights, M=args.matches,
            pipeline=args.pipeline, jobs=args.jobs)
        _write_json(summary, args.out)
        return EXIT_OK
    if args.data is None:
        raise DataValidationError("estimate needs --data (or --reps with --dgp)")
    ds = load_csv(args.data)
    truth = _truth_for(args.data, args.truth)
    if args.pipeline == "recommended":
        rep = run_recommended(ds, args.basis, args.degree, args.lam, truth)
    else:
        rep = estimate(ds, args.estimator or "tmle", args.riesz, args.basis, args.degree,
                       args.lam, args.residual_weights, args.matches, args.metric, truth)
    if args.weights_out:
        if rep.riesz is None:
            w = matching_weights(match_units(ds, args.matches, args.metric), ds).w
        elif rep.riesz.loss_kind in ("kl", "oracle"):
            w = rep.riesz.unit_weights(ds)
        else:
            w = rep.riesz.unit_alpha(ds)
        write_weights(args.weights_out, w)
    _write_json(rep.to_dict(), args.out)
    return EXIT_OK


def cmd_balance_check(args) -> int:
    ds = load_csv(args.data)
    w = load_weights(args.weights)
    if w.shape[0] != ds.n:
        raise DataValidationError(f"weights file has {w.shape[0]} rows, data has {ds.n}")
    form = args.form
    if form == "auto":
        form = "eb" if np.all(w > 1) else "sbw"
    arm_basis, cov_basis = _bases(args.basis, ds.k, args.degree)
    if form == "eb":
        rep = balance_residual_eb(ds, w, cov_basis)
    else:
        rep = balance_residual_sbw(ds, w, arm_basis)
    _write_json(rep.to_dict(), args.out)
    return EXIT_OK


def cmd_equivalence_check(args) -> int:
    ds = load_csv(args.data)
    res = verify_matching_riesz_equivalence(ds, args.metric)
    _write_json(res.to_dict(), args.out)
    return EXIT_OK


def cmd_schema(args) -> int:
    _write_json(SCHEMAS[args.name], args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="targeted-neyman",
                     description="ATE estimation via Bregman-Riesz regression, "
                                 "covariate balancing, matching and TMLE.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a synthetic dataset with known ATE")
    p.add_argument("--dgp", default="linear-logit", choices=sorted(DGP_PRESETS))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--truth-out", help="truth sidecar path (default <out stem>.truth.json)")
    p.set_defaults(func=cmd_simulate)

    def add_basis(q):
        q.add_argument("--basis", default="raw+intercept",
                       choices=[b for b in BASIS_KINDS if b != "voronoi"])
        q.add_argument("--degree", type=int, default=1, help="polynomial degree")

    p = sub.add_parser("estimate", help="estimate the ATE and emit a JSON report")
    p.add_argument("--data")
    p.add_argument("--truth", help="truth sidecar (default: <data stem>.truth.json if present)")
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--riesz", default="kl-logistic", choices=RIESZ_METHODS)
    add_basis(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-6)
    p.add_argument("--matches", type=int, default=1, help="M for --estimator match")
    p.add_argument("--metric", default="standardized-euclidean", choices=METRICS)
    p.add_argument("--residual-weights", action="store_true",
                   help="weight the Riesz loss by squared outcome residuals")
    p.add_argument("--pipeline", choices=["recommended"])
    p.add_argument("--weights-out", help="write per-unit weights CSV (header w)")
    p.add_argument("--reps", type=int, help="Monte Carlo mode: number of replications")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dgp", choices=sorted(DGP_PRESETS))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("balance-check", help="balance residuals of a weight vector")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True, help="CSV with header w")
    add_basis(p)
    p.add_argument("--form", default="auto", choices=["auto", "sbw", "eb"],
                   help="auto: eb if every weight exceeds 1, else sbw")
    p.add_argument("--out")
    p.set_defaults(func=cmd_balance_check)

    p = sub.add_parser("equivalence-check",
                       help="compare 1-NN matching with Voronoi Riesz regression")
    p.add_argument("--data", required=True)
    p.add_argument("--metric", default="standardized-euclidean", choices=METRICS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_equivalence_check)

    p = sub.add_parser("schema", help="print a JSON Schema for one of the reports")
    p.add_argument("name", choices=sorted(SCHEMAS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "lam", 0.0) < 0:
        _emit_error({"error": "UsageError", "message": "--lambda must be >= 0"})
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except NumericalError as exc:
        _emit_error(exc.diagnostics())
        return EXIT_NUMERICAL
    except (DataValidationError, DomainError, FileNotFoundError, OSError) as exc:
        _emit_error({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
