"""JSON schemas for configuration input and every JSON document the CLI writes.

``python -m tripoisson.schemas DIR`` writes them out as ``DIR/<name>.json``.
"""
import json
import sys
from pathlib import Path

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM_OR_NULL = {"type": ["number", "null"]}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(properties: dict, required=(), extra=False) -> dict:
    out = {"type": "object", "properties": properties, "additionalProperties": extra}
    if required:
        out["required"] = list(required)
    return out


PRIOR_SCHEMA = {
    "type": "object",
    "properties": {
        "distribution": {"enum": ["gamma", "uniform", "fixed"]},
        "parameters": {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2},
        "parameterization": {"enum": ["rate", "scale"]},
    },
    "required": ["distribution", "parameters"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"distribution": {"const": "gamma"}}},
         "then": {"required": ["parameterization"],
                  "properties": {"parameters": {"minItems": 2}}}},
        {"if": {"properties": {"distribution": {"const": "uniform"}}},
         "then": {"properties": {"parameters": {"minItems": 2}},
                  "not": {"required": ["parameterization"]}}},
        {"if": {"properties": {"distribution": {"const": "fixed"}}},
         "then": {"properties": {"parameters": {"maxItems": 1}},
                  "not": {"required": ["parameterization"]}}},
    ],
}

MCMC_SCHEMA = _obj({
    "n_chains": _POS_INT,
    "n_iterations": _POS_INT,
    "burn_in": _NONNEG_INT,
    "thin": _POS_INT,
    "seed": {"type": ["integer", "null"], "minimum": 0},
    "rw_scale_G": _POS,
    "rw_scale_T": _POS,
    "rw_scale_logalpha": _POS,
    "rw_scale_logphi": _POS,
    "rw_scale_loglambda": _POS,
    "rw_scale_ridge": _POS,
    "ridge_moves": {"type": "boolean"},
    "adapt": {"type": "boolean"},
    "adapt_window": _POS_INT,
})

STUDY_SCHEMA = _obj({
    "area_km2": _POS,
    "strip_halfwidth_m": _POS,
    "transect_lengths_m": {"type": "array", "items": _POS, "minItems": 1},
})

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "model run configuration",
    **_obj({
        "model": _obj({
            "family": {"enum": ["poisson", "negbin"]},
            "priors": _obj({k: PRIOR_SCHEMA for k in ("lambda_G", "lambda_N", "alpha", "phi")},
                           required=("lambda_G", "lambda_N", "alpha")),
        }, required=("priors",)),
        "mcmc": MCMC_SCHEMA,
        "study": STUDY_SCHEMA,
    }, required=("model",)),
}

DESIGN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "line-transect survey design",
    **_obj({
        "region_width_m": _POS,
        "region_length_m": _POS,
        "transect_spacing_m": _POS,
        "truncation_m": _POS,
        "detection_sigma_m": _POS,
        "n_vestiges": _NONNEG_INT,
    }),
}

_COVERAGE = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

TP_PARAMS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "triple Poisson simulation parameters",
    **_obj({
        "lambda_G": _POS,
        "lambda_N": _POS,
        "alpha": _POS,
        "coverage": {"oneOf": [_COVERAGE, {"type": "array", "items": _COVERAGE, "minItems": 1}]},
        "n_sites": _POS_INT,
        "n_replicates": _POS_INT,
        "family": {"enum": ["poisson", "negbin"]},
        "phi": _POS,
    }, required=("lambda_G", "lambda_N", "alpha", "coverage")),
}

# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

_SUMMARY = _obj({
    "mean": _NUM, "sd": _NUM, "q2_5": _NUM, "median": _NUM, "q97_5": _NUM,
    "ess": _NUM, "rhat": _NUM_OR_NULL,
}, required=("mean", "sd", "q2_5", "median", "q97_5", "ess", "rhat"))

_MODEL = _obj({
    "family": {"enum": ["poisson", "negbin"]},
    "priors": {"type": "object", "additionalProperties": PRIOR_SCHEMA},
}, required=("family", "priors"))

_FIT_BODY = _obj({
    "family": {"enum": ["poisson", "negbin"]},
    "seed": _NONNEG_INT,
    "n_chains": _POS_INT,
    "n_draws_per_chain": _NONNEG_INT,
    "settings": {"type": "object"},
    "summaries": {"type": "object", "additionalProperties": _SUMMARY,
                  "required": ["G", "T", "lambda_G", "lambda_N", "alpha"]},
    "dic": _NUM_OR_NULL,
    "dbar": _NUM_OR_NULL,
    "p_d": _NUM_OR_NULL,
    "acceptance_rates": {"type": "object", "additionalProperties": _NUM},
    "chains": {"type": "object"},
    "model": _MODEL,
    "dataset": _obj({"n_sites": _POS_INT, "n_replicates": _POS_INT, "source": {"type": "string"}},
                    required=("n_sites", "n_replicates")),
    "preset": {"type": ["string", "null"]},
}, required=("family", "seed", "n_chains", "n_draws_per_chain", "summaries", "dic", "dbar", "p_d",
             "acceptance_rates", "model", "dataset"))

FIT_RESULT_SCHEMA = {"$schema": "https://json-schema.org/draft/2020-12/schema",
                     "title": "posterior fit", **_FIT_BODY}

COMPARE_DIC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Poisson vs negative binomial DIC comparison",
    **_obj({
        "seed": _NONNEG_INT,
        "fits": _obj({"poisson": _FIT_BODY, "negbin": _FIT_BODY}, required=("poisson", "negbin")),
        "dic": _obj({"poisson": _NUM, "negbin": _NUM}, required=("poisson", "negbin")),
        "winner": {"enum": ["poisson", "negbin"]},
    }, required=("seed", "fits", "dic", "winner")),
}

_RECORD = _obj({
    "sim": _NONNEG_INT, "n_true": _NUM, "n_hat": _NUM_OR_NULL,
    "cri_lower": _NUM_OR_NULL, "cri_upper": _NUM_OR_NULL, "covered": {"type": "boolean"},
    "relative_bias": _NUM_OR_NULL, "ci_bias_lower": _NUM_OR_NULL, "ci_bias_upper": _NUM_OR_NULL,
    "error": {"type": ["string", "null"]},
}, required=("sim", "n_true", "n_hat", "cri_lower", "cri_upper", "covered", "relative_bias",
             "ci_bias_lower", "ci_bias_upper", "error"))

STUDY_RESULTS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "simulation study results",
    **_obj({
        "study": {"enum": ["table1", "alpha-study", "appendix-grid"]},
        "seed": _NONNEG_INT,
        "scale": _POS,
        "n_simulations": _POS_INT,
        "checks": {"type": "object"},
        "scenarios": {"type": "array", "items": _obj({
            "label": {"type": "string"},
            "mean_relative_bias": _NUM_OR_NULL,
            "rel_bias_ci_lower": _NUM_OR_NULL,
            "rel_bias_ci_upper": _NUM_OR_NULL,
            "coverage_rate": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
            "mean_cri_width": _NUM_OR_NULL,
            "n_simulations": _POS_INT,
            "n_failed": _NONNEG_INT,
            "failed": {"type": "boolean"},
            "params": {"type": "object"},
            "records": {"type": "array", "items": _RECORD},
        }, required=("label", "mean_relative_bias", "rel_bias_ci_lower", "rel_bias_ci_upper",
                     "coverage_rate", "n_simulations", "n_failed", "failed", "params", "records"))},
    }, required=("study", "seed", "scenarios")),
}

TP_TRUTH_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "triple Poisson simulation truth",
    **_obj({
        "seed": _NONNEG_INT,
        "G": _NONNEG_INT,
        "T": _NONNEG_INT,
        "lambda_G": _POS,
        "lambda_N": _POS,
        "alpha": _POS,
        "family": {"enum": ["poisson", "negbin"]},
        "phi": _NUM_OR_NULL,
        "n_sites": _POS_INT,
        "n_replicates": _POS_INT,
    }, required=("seed", "G", "T", "lambda_G", "lambda_N", "alpha", "family", "n_sites",
                 "n_replicates")),
}

SURVEY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "simulated line-transect survey",
    **_obj({
        "seed": _NONNEG_INT,
        "design": _obj(DESIGN_SCHEMA["properties"]),
        "transect_lengths_m": {"type": "array", "items": _POS},
        "coverage": {"type": "array", "items": _COVERAGE},
        "counts": {"type": "array", "items": _NONNEG_INT},
        "n_detections": _NONNEG_INT,
        "true_abundance": _NUM,
    }, required=("seed", "design", "transect_lengths_m", "coverage", "counts", "n_detections")),
}

#: schemas shipped as files, keyed by file stem
SCHEMAS = {
    "config": CONFIG_SCHEMA,
    "survey_design": DESIGN_SCHEMA,
    "tp_params": TP_PARAMS_SCHEMA,
    "fit_result": FIT_RESULT_SCHEMA,
    "compare_dic": COMPARE_DIC_SCHEMA,
    "study_results": STUDY_RESULTS_SCHEMA,
    "tp_truth": TP_TRUTH_SCHEMA,
    "survey": SURVEY_SCHEMA,
}


def schema_text(name: str) -> str:
    return json.dumps(SCHEMAS[name], indent=2, sort_keys=True) + "\n"


def write_schema_files(directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SCHEMAS:
        p = directory / f"{name}.json"
        p.write_text(schema_text(name), encoding="utf-8", newline="\n")
        paths.append(p)
    return paths


if __name__ == "__main__":
    for p in write_schema_files(sys.argv[1] if len(sys.argv) > 1 else "docs/schemas"):
        print(p)
