"""JSON Schemas for the machine-readable outputs of the CLI."""

from __future__ import annotations

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}

_DRAFT = "https://json-schema.org/draft/2020-12/schema"

_BALANCE_BODY = {
    "type": "object",
    "required": ["residuals", "max_abs_violation"],
    "properties": {
        "form": {"enum": ["sbw", "eb"]},
        "residuals": {"type": "array", "items": _NUM},
        "max_abs_violation": {"type": "number", "minimum": 0},
        "basis": {"type": "object"},
    },
}

BALANCE_REPORT = {"$schema": _DRAFT, "title": "BalanceReport", **_BALANCE_BODY}

ESTIMATE_REPORT = {
    "$schema": _DRAFT,
    "title": "EstimateReport",
    "type": "object",
    "required": ["estimator", "tau_hat", "std_error", "ci95", "neyman_error",
                 "eq2_term", "balance"],
    "properties": {
        "estimator": {"enum": ["ipw", "plugin", "onestep", "tmle", "matching"]},
        "tau_hat": _NUM,
        "std_error": {"type": "number", "minimum": 0},
        "se_kind": {"enum": ["score", "naive"]},
        "ci95": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "neyman_error": _NUM,
        "eq1_term": _NUM,
        "eq2_term": _NUM,
        "decomposition": {
            "type": "object",
            "required": ["eq1_term", "eq2_term", "oracle_noise", "cross_term"],
        },
        "balance": {"oneOf": [{"type": "null"}, _BALANCE_BODY]},
        "notes": {"type": "array", "items": {"type": "string"}},
        "fluctuation_eps": _NUM,
        "score_residual": _NUM,
        "true_ate": _NUM,
        "pipeline": {"const": "recommended"},
        "steps": {
            "type": "array",
            "items": {"type": "object", "required": ["step", "action"]},
            "minItems": 4,
            "maxItems": 4,
        },
    },
}

EQUIVALENCE_REPORT = {
    "$schema": _DRAFT,
    "title": "EquivalenceReport",
    "type": "object",
    "required": ["conclusive", "equivalent", "max_deviation"],
    "properties": {
        "conclusive": {"type": "boolean"},
        "equivalent": {"type": "boolean"},
        "max_deviation": _NUM_OR_NULL,
        "notice": {"type": "string"},
    },
}

MONTE_CARLO_REPORT = {
    "$schema": _DRAFT,
    "title": "MonteCarloReport",
    "type": "object",
    "required": ["dgp", "n", "reps", "seed", "true_ate", "estimators"],
    "properties": {
        "n": {"type": "integer"},
        "reps": {"type": "integer"},
        "estimators": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["mean_tau_hat", "bias", "mc_standard_error", "coverage95"],
            },
        },
    },
}

ERROR_REPORT = {
    "$schema": _DRAFT,
    "title": "ErrorReport",
    "type": "object",
    "required": ["error", "message"],
}

SCHEMAS = {
    "estimate-report": ESTIMATE_REPORT,
    "balance-report": BALANCE_REPORT,
    "equivalence-report": EQUIVALENCE_REPORT,
    "monte-carlo-report": MONTE_CARLO_REPORT,
    "error-report": ERROR_REPORT,
}
