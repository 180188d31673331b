"""Dataset CSV and YAML configuration files.

Dataset files have the exact header ``site_id,replicate,count,coverage`` and
one row per (site, replicate).  Configuration files are YAML trees with the
sections ``model``, ``mcmc`` and ``study``; their layout is fixed by the JSON
schemas in :mod:`tripoisson.schemas`.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigurationError, DataError
from .inference import McmcSettings
from .model_core import (Family, FixedValue, GammaPrior, ModelConfig, PriorSpec, SiteRecord,
                         SurveyDataset, UniformPrior)
from .presets import StudyGeometry
from .schemas import CONFIG_SCHEMA

DATASET_HEADER = ("site_id", "replicate", "count", "coverage")


# ---------------------------------------------------------------------------
# dataset CSV
# ---------------------------------------------------------------------------

def _parse_int(text: str, what: str, line: int) -> int:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: {what} {text!r} is not a number") from None
    if not math.isfinite(value) or not value.is_integer():
        raise DataError(f"line {line}: {what} {text!r} is not an integer")
    return int(value)


def parse_dataset(text: str, source: str = "<string>") -> SurveyDataset:
    """Parse dataset CSV text; errors carry 1-based line numbers."""
    if not text.strip():
        raise DataError(f"{source}: file is empty")
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    header = tuple(c.strip() for c in rows[0])
    if header != DATASET_HEADER:
        raise DataError(f"{source}: line 1: header must be {','.join(DATASET_HEADER)!r}, "
                        f"got {','.join(header)!r}")
    sites: dict = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise DataError(f"{source}: line {line}: expected 4 fields, got {len(row)}")
        site_id, rep_s, count_s, cov_s = (c.strip() for c in row)
        if not site_id:
            raise DataError(f"{source}: line {line}: site_id is empty")
        rep = _parse_int(rep_s, "replicate", line)
        count = _parse_int(count_s, "count", line)
        if count < 0:
            raise DataError(f"{source}: line {line}: count must be nonnegative, got {count}")
        try:
            cov = float(cov_s)
        except ValueError:
            raise DataError(f"{source}: line {line}: coverage {cov_s!r} is not a number") from None
        if not (math.isfinite(cov) and 0.0 < cov < 1.0):
            raise DataError(f"{source}: line {line}: coverage must lie strictly in (0, 1), got {cov_s}")
        entry = sites.setdefault(site_id, {"coverage": cov, "line": line, "reps": {}})
        if cov != entry["coverage"]:
            raise DataError(f"{source}: line {line}: coverage for site {site_id!r} differs from "
                            f"line {entry['line']}")
        if rep in entry["reps"]:
            raise DataError(f"{source}: line {line}: duplicate (site, replicate) key "
                            f"({site_id!r}, {rep})")
        entry["reps"][rep] = count
    if not sites:
        raise DataError(f"{source}: no data rows")

    n_rep = max(len(e["reps"]) for e in sites.values())
    records = []
    for site_id, e in sites.items():
        reps = sorted(e["reps"])
        if len(reps) != n_rep:
            raise DataError(f"{source}: site {site_id!r} has {len(reps)} replicates, others have "
                            f"{n_rep} (ragged replicate structure)")
        records.append(SiteRecord(site_id, e["coverage"], tuple(e["reps"][r] for r in reps)))
    return SurveyDataset(tuple(records))


def load_dataset(path) -> SurveyDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    return parse_dataset(path.read_text(encoding="utf-8"), str(path))


def format_dataset(data: SurveyDataset) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for rec in data.sites:
        for r, c in enumerate(rec.counts, start=1):
            w.writerow([rec.site_id, r, int(c), repr(float(rec.coverage))])
    return out.getvalue()


def write_dataset(data: SurveyDataset, path) -> Path:
    path = Path(path)
    path.write_text(format_dataset(data), encoding="utf-8", newline="\n")
    return path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    model: ModelConfig
    mcmc: McmcSettings
    study: StudyGeometry
    phi_prior: PriorSpec = GammaPrior(0.01, 0.01)

    def model_for(self, family) -> ModelConfig:
        """The model with its family switched; the configured phi prior is kept for NB."""
        return self.model.with_family(family, self.phi_prior)


def prior_from_dict(d: dict) -> PriorSpec:
    dist = d["distribution"]
    p = [float(v) for v in d["parameters"]]
    if dist == "gamma":
        if len(p) != 2:
            raise ConfigurationError("gamma prior takes two parameters")
        if d.get("parameterization") == "scale":
            return GammaPrior.from_scale(*p)
        return GammaPrior(*p)
    if dist == "uniform":
        if len(p) != 2:
            raise ConfigurationError("uniform prior takes two parameters")
        return UniformPrior(*p)
    if len(p) != 1:
        raise ConfigurationError("fixed value takes one parameter")
    return FixedValue(p[0])


def prior_to_dict(prior: PriorSpec) -> dict:
    if isinstance(prior, GammaPrior):
        return {"distribution": "gamma", "parameters": [prior.shape, prior.rate],
                "parameterization": "rate"}
    if isinstance(prior, UniformPrior):
        return {"distribution": "uniform", "parameters": [prior.lower, prior.upper]}
    return {"distribution": "fixed", "parameters": [prior.value]}


def model_to_dict(config: ModelConfig) -> dict:
    return {"family": config.family.value,
            "priors": {k: prior_to_dict(v) for k, v in config.priors.items()}}


def parse_config(tree, source: str = "<config>") -> RunConfig:
    """Validate a configuration tree against the schema and build typed settings."""
    if tree is None:
        tree = {}
    try:
        jsonschema.validate(tree, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"{source}: {where}: {exc.message}") from None

    model_t = tree.get("model", {})
    priors = model_t.get("priors", {})
    family = Family.parse(model_t.get("family", "poisson"))
    for name in ("lambda_G", "lambda_N", "alpha"):
        if name not in priors:
            raise ConfigurationError(f"{source}: model/priors: missing prior for {name}")
    # a phi prior is kept even under the Poisson family so compare-dic can switch
    phi = priors.get("phi")
    phi_prior = prior_from_dict(phi) if phi is not None else GammaPrior(0.01, 0.01)
    model = ModelConfig(family, prior_from_dict(priors["lambda_G"]),
                        prior_from_dict(priors["lambda_N"]), prior_from_dict(priors["alpha"]),
                        phi_prior if family is Family.NEGBIN else None)

    mcmc = McmcSettings(**tree.get("mcmc", {}))
    st = tree.get("study", {})
    lengths = st.get("transect_lengths_m")
    study = StudyGeometry(st.get("area_km2"), st.get("strip_halfwidth_m"),
                          tuple(lengths) if lengths is not None else None)
    return RunConfig(model, mcmc, study, phi_prior)


def load_yaml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"configuration file not found: {path}")
    try:
        tree = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    if tree is not None and not isinstance(tree, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return tree or {}


def load_config(path) -> RunConfig:
    return parse_config(load_yaml(path), str(path))
