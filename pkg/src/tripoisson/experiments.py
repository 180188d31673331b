"""Monte-Carlo simulation studies: distance sampling vs triple Poisson, the
alpha-knowledge study and the full factorial prior/design grid.

Every study takes an integer master seed.  Each unit of work derives its own
stream from ``SeedSequence(seed, spawn_key=...)`` with a key naming the
work item, so results do not depend on execution order or on the number of
worker processes.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError, TriPoissonError
from .inference import McmcSettings, run_mcmc
from .model_core import (Family, FixedValue, GammaPrior, ModelConfig, SurveyDataset,
                         UniformPrior)
from .survey_sim import (SurveyDesign, ds_abundance, simulate_counts, simulate_survey)

#: reduced per-fit sampler budget used by the studies
EXPERIMENT_MCMC = McmcSettings(n_chains=2, n_iterations=8000, burn_in=2000)

FAILURE_FRACTION = 0.10


def relative_bias(n_hat: float, n_true: float) -> float:
    """(n_hat - n_true) / n_true."""
    if not n_true > 0:
        raise DomainError(f"true abundance must be positive, got {n_true}")
    return (n_hat - n_true) / n_true


def ci_relative_bias(cri_lower: float, cri_upper: float, n_true: float) -> Tuple[float, float]:
    """Relative bias of both interval ends, lower first."""
    if cri_lower > cri_upper:
        raise DomainError("cri_lower must not exceed cri_upper")
    return relative_bias(cri_lower, n_true), relative_bias(cri_upper, n_true)


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass
class ScenarioSpec:
    label: str
    data_generator: str  # "tp" (triple Poisson generative) or "ds" (distance-sampling survey)
    generator_params: dict
    model_config: Optional[ModelConfig]
    n_simulations: int
    mcmc_settings: McmcSettings = field(default_factory=lambda: replace(EXPERIMENT_MCMC))

    def __post_init__(self):
        if self.n_simulations < 1:
            raise ConfigurationError("n_simulations must be >= 1")
        if self.data_generator not in ("tp", "ds"):
            raise ConfigurationError(f"unknown data generator {self.data_generator!r}")


@dataclass
class SimRecord:
    sim: int
    n_true: float
    n_hat: float = float("nan")
    cri_lower: float = float("nan")
    cri_upper: float = float("nan")
    covered: bool = False
    relative_bias: float = float("nan")
    ci_bias_lower: float = float("nan")
    ci_bias_upper: float = float("nan")
    error: Optional[str] = None

    @classmethod
    def from_estimate(cls, sim, n_true, n_hat, lower, upper) -> "SimRecord":
        lo_b, hi_b = ci_relative_bias(lower, upper, n_true)
        return cls(sim, float(n_true), float(n_hat), float(lower), float(upper),
                   bool(lower <= n_true <= upper), relative_bias(n_hat, n_true), lo_b, hi_b)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ScenarioResult:
    label: str
    mean_relative_bias: float
    rel_bias_ci_lower: float
    rel_bias_ci_upper: float
    coverage_rate: float
    records: List[SimRecord]
    params: dict = field(default_factory=dict)
    mean_cri_width: float = float("nan")
    n_failed: int = 0
    failed: bool = False

    @property
    def n_simulations(self) -> int:
        return len(self.records)

    def to_row(self) -> dict:
        return {"label": self.label,
                "mean_relative_bias": self.mean_relative_bias,
                "rel_bias_ci_lower": self.rel_bias_ci_lower,
                "rel_bias_ci_upper": self.rel_bias_ci_upper,
                "coverage_rate": self.coverage_rate,
                "mean_cri_width": self.mean_cri_width,
                "n_simulations": self.n_simulations,
                "n_failed": self.n_failed,
                "failed": self.failed}

    def to_dict(self) -> dict:
        out = self.to_row()
        out["params"] = dict(self.params)
        out["records"] = [asdict(r) for r in self.records]
        return out


def aggregate(label: str, records: Sequence[SimRecord], params: Optional[dict] = None) -> ScenarioResult:
    """Average per-simulation records; the scenario fails when more than 10% errored."""
    records = sorted(records, key=lambda r: r.sim)
    good = [r for r in records if r.ok]
    n_failed = len(records) - len(good)

    def mean(xs):
        xs = [x for x in xs if math.isfinite(x)]
        return float(np.mean(xs)) if xs else float("nan")

    return ScenarioResult(
        label=label,
        mean_relative_bias=mean([r.relative_bias for r in good]),
        rel_bias_ci_lower=mean([r.ci_bias_lower for r in good]),
        rel_bias_ci_upper=mean([r.ci_bias_upper for r in good]),
        coverage_rate=float(np.mean([r.covered for r in good])) if good else float("nan"),
        records=list(records),
        params=dict(params or {}),
        mean_cri_width=mean([r.cri_upper - r.cri_lower for r in good]),
        n_failed=n_failed,
        failed=n_failed > FAILURE_FRACTION * len(records))


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_seq(seed, *key)))


def _int_seed(seed: int, *key: int) -> int:
    return int(_seq(seed, *key).generate_state(1, np.uint64)[0])


def _fit_record(sim: int, n_true: float, data: SurveyDataset, config: ModelConfig,
                settings: McmcSettings, seed: int, point: str) -> SimRecord:
    try:
        fit = run_mcmc(data, config, replace(settings, seed=seed), with_dic=False)
    except TriPoissonError as exc:
        return SimRecord(sim, float(n_true), error=f"{type(exc).__name__}: {exc}")
    s = fit.summaries["T"]
    n_hat = s.mean if point == "mean" else s.median
    return SimRecord.from_estimate(sim, n_true, n_hat, s.q2_5, s.q97_5)


def _check_point(point: str) -> str:
    if point not in ("mean", "median"):
        raise ConfigurationError("point estimate must be 'mean' or 'median'")
    return point


def _map(fn: Callable, tasks: list, n_workers: int) -> list:
    if n_workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n_workers))))


def _collect(outputs: Iterable[List[Tuple[str, SimRecord]]]) -> Dict[str, List[SimRecord]]:
    by_label: Dict[str, List[SimRecord]] = {}
    for out in outputs:
        for label, rec in out:
            by_label.setdefault(label, []).append(rec)
    return by_label


# ---------------------------------------------------------------------------
# distance sampling vs triple Poisson
# ---------------------------------------------------------------------------

TRUE_LAMBDA = 15.0
TRUE_DELTA = 10.0

#: (label, lambda per day, delta days)
DS_MODELS = (("DS1", 15, 10), ("DS2", 16, 10), ("DS3", 15, 11), ("DS4", 16, 11),
             ("DS5", 17, 12), ("DS6", 18, 13), ("DS7", 19, 14))

_INFORMATIVE_N = GammaPrior(5.0, 1.0)
_INFORMATIVE_G = GammaPrior(10.0, 1.0)
_FLAT = GammaPrior(0.01, 0.01)
_TP_ALPHA = UniformPrior(10.0, 10000.0)

#: (label, prior on lambda_N, prior on lambda_G)
TP_MODELS = (("TP1", _INFORMATIVE_N, _INFORMATIVE_G),
             ("TP2", _INFORMATIVE_N, _FLAT),
             ("TP3", _FLAT, _INFORMATIVE_G),
             ("TP4", _FLAT, _FLAT))


def table1_true_abundance(design: SurveyDesign) -> float:
    """Animals implied by the standing vestige stock at the true rates."""
    return design.n_vestiges / (TRUE_LAMBDA * TRUE_DELTA)


def table1_specs(n_simulations: int, mcmc_settings: McmcSettings,
                 design: SurveyDesign) -> List[ScenarioSpec]:
    specs = [ScenarioSpec(label, "ds", {"design": design, "lambda": lam, "delta": dlt}, None,
                          n_simulations, mcmc_settings) for label, lam, dlt in DS_MODELS]
    specs += [ScenarioSpec(label, "ds", {"design": design},
                           ModelConfig(Family.POISSON, pg, pn, _TP_ALPHA),
                           n_simulations, mcmc_settings) for label, pn, pg in TP_MODELS]
    return specs


def _table1_task(args) -> List[Tuple[str, SimRecord]]:
    sim, seed, design, specs, point = args
    n_true = table1_true_abundance(design)
    survey, counts, nu = simulate_survey(design, _rng(seed, 1, sim))
    out = []
    tp_data = None
    for j, spec in enumerate(specs):
        if spec.model_config is None:
            try:
                est = ds_abundance(survey, design.truncation_m, design.area_km2,
                                   spec.generator_params["delta"], spec.generator_params["lambda"])
                rec = SimRecord.from_estimate(sim, n_true, est.abundance, est.ci_lower, est.ci_upper)
            except TriPoissonError as exc:
                rec = SimRecord(sim, n_true, error=f"{type(exc).__name__}: {exc}")
        else:
            if tp_data is None:
                tp_data = SurveyDataset.from_arrays(counts, nu)
            rec = _fit_record(sim, n_true, tp_data, spec.model_config, spec.mcmc_settings,
                              _int_seed(seed, 2, sim, j), point)
        out.append((spec.label, rec))
    return out


def run_table1(n_simulations: int = 50, mcmc_settings: Optional[McmcSettings] = None,
               seed: int = 0, design: Optional[SurveyDesign] = None,
               models: Optional[Sequence[str]] = None, point: str = "mean",
               n_workers: int = 1) -> List[ScenarioResult]:
    """Simulate surveys and score the DS1-DS7 and TP1-TP4 estimators on each.

    Every model sees the same simulated surveys.  ``models`` restricts the
    run to a subset of labels.
    """
    if n_simulations < 1:
        raise ConfigurationError("n_simulations must be >= 1")
    point = _check_point(point)
    design = design or SurveyDesign()
    settings = mcmc_settings or replace(EXPERIMENT_MCMC)
    specs = table1_specs(n_simulations, settings, design)
    if models is not None:
        wanted = {m.upper() for m in models}
        unknown = wanted - {s.label for s in specs}
        if unknown:
            raise ConfigurationError(f"unknown table1 models: {sorted(unknown)}")
        specs = [s for s in specs if s.label in wanted]
    tasks = [(i, seed, design, specs, point) for i in range(n_simulations)]
    by_label = _collect(_map(_table1_task, tasks, n_workers))
    n_true = table1_true_abundance(design)
    results = []
    for spec in specs:
        params = {"model": spec.label, "n_true": n_true}
        params.update({k: v for k, v in spec.generator_params.items() if k != "design"})
        results.append(aggregate(spec.label, by_label[spec.label], params))
    return results


# ---------------------------------------------------------------------------
# alpha knowledge study
# ---------------------------------------------------------------------------

def alpha_study_specs(n_simulations: int, mcmc_settings: McmcSettings, alpha_true: float,
                      alpha_wrong: float, alpha_upper: float, n_sites: int,
                      coverage: float) -> List[ScenarioSpec]:
    gp = {"alpha": alpha_true, "n_sites": n_sites, "coverage": coverage}
    priors = dict(prior_lambda_G=_INFORMATIVE_G, prior_lambda_N=_INFORMATIVE_N)
    return [
        ScenarioSpec("alpha_fixed_correct", "tp", gp,
                     ModelConfig(Family.POISSON, prior_alpha=FixedValue(alpha_true), **priors),
                     n_simulations, mcmc_settings),
        ScenarioSpec("alpha_fixed_wrong", "tp", gp,
                     ModelConfig(Family.POISSON, prior_alpha=FixedValue(alpha_wrong), **priors),
                     n_simulations, mcmc_settings),
        ScenarioSpec("alpha_uniform", "tp", gp,
                     ModelConfig(Family.POISSON, prior_alpha=UniformPrior(0.0, alpha_upper), **priors),
                     n_simulations, mcmc_settings),
    ]


def _alpha_task(args):
    sim, seed, T_true, specs, point = args
    gp = specs[0].generator_params
    nu = np.full(gp["n_sites"], gp["coverage"])
    y = simulate_counts(T_true, gp["alpha"], nu, 1, Family.POISSON, None, _rng(seed, 3, sim))
    data = SurveyDataset.from_arrays(y, nu)
    return [(spec.label, _fit_record(sim, T_true, data, spec.model_config, spec.mcmc_settings,
                                     _int_seed(seed, 4, sim, j), point))
            for j, spec in enumerate(specs)]


def run_alpha_study(n_simulations: int = 50, mcmc_settings: Optional[McmcSettings] = None,
                    seed: int = 0, alpha_true: float = 35.0, T_true: int = 86,
                    alpha_wrong: float = 45.0, alpha_upper: float = 100.0,
                    n_sites: int = 10, coverage: float = 0.01, point: str = "mean",
                    n_workers: int = 1) -> List[ScenarioResult]:
    """Fit alpha fixed at the truth, fixed at a wrong value, and Uniform(0, upper).

    Counts are Poisson(alpha_true * T_true * coverage) at ``n_sites`` sites
    with abundance held at ``T_true`` in every simulation.
    """
    if n_simulations < 1:
        raise ConfigurationError("n_simulations must be >= 1")
    if not (alpha_true > 0 and alpha_wrong > 0 and alpha_upper > alpha_true and T_true > 0):
        raise ConfigurationError("alpha values and T_true must be positive, alpha_upper > alpha_true")
    point = _check_point(point)
    settings = mcmc_settings or replace(EXPERIMENT_MCMC)
    specs = alpha_study_specs(n_simulations, settings, alpha_true, alpha_wrong, alpha_upper,
                              n_sites, coverage)
    tasks = [(i, seed, int(T_true), specs, point) for i in range(n_simulations)]
    by_label = _collect(_map(_alpha_task, tasks, n_workers))
    alphas = {"alpha_fixed_correct": alpha_true, "alpha_fixed_wrong": alpha_wrong,
              "alpha_uniform": f"Uniform(0, {alpha_upper:g})"}
    return [aggregate(s.label, by_label[s.label],
                      {"alpha_true": alpha_true, "alpha_model": alphas[s.label], "n_true": T_true})
            for s in specs]


# ---------------------------------------------------------------------------
# factorial grid
# ---------------------------------------------------------------------------

GRID_ALPHA = 20.0
GRID_ALPHA_UPPER = 50.0
GRID_COVERAGE = 0.01

#: (name, family, phi)
GRID_FAMILIES = (("poisson", Family.POISSON, None),
                 ("negbin_phi0.2", Family.NEGBIN, 0.2),
                 ("negbin_phi2", Family.NEGBIN, 2.0))
GRID_LAMBDAS = (5.0, 10.0)
#: (name, prior on lambda_N, prior on lambda_G)
GRID_PRIORS = (("gamma_flat", _FLAT, _FLAT),
               ("gamma_3_1", GammaPrior(3.0, 1.0), GammaPrior(3.0, 1.0)),
               ("uniform_1_100", UniformPrior(1.0, 100.0), UniformPrior(1.0, 100.0)),
               ("mixed", GammaPrior(3.0, 1.0), _FLAT))
#: (name, sites, replicates)
GRID_DESIGNS = (("10x1", 10, 1), ("100x1", 100, 1), ("10x10", 10, 10))
_POOL_SIZE = max(n * r for _, n, r in GRID_DESIGNS)


def grid_n_simulations(scale_factor: float) -> int:
    if not 0 < scale_factor <= 1:
        raise ConfigurationError(f"scale_factor must lie in (0, 1], got {scale_factor}")
    return max(10, int(round(100 * scale_factor)))


def grid_alpha_modes(alpha_wrong: Optional[float]):
    modes = [("fixed", FixedValue(GRID_ALPHA)), ("uniform", UniformPrior(0.0, GRID_ALPHA_UPPER))]
    if alpha_wrong is not None:
        modes.insert(1, ("fixed_wrong", FixedValue(alpha_wrong)))
    return modes


def grid_label(family: str, alpha_mode: str, lambda_N: float, lambda_G: float,
               prior: str, design: str) -> str:
    return (f"{family}|alpha={alpha_mode}|lambda_N={lambda_N:g}|lambda_G={lambda_G:g}"
            f"|prior={prior}|design={design}")


def _grid_truth(seed, fi, ni, gi, sim, lambda_N, lambda_G):
    rng = _rng(seed, 10, fi, ni, gi, sim)
    while True:
        G = int(rng.poisson(lambda_G))
        T = int(rng.poisson(G * lambda_N))
        if T > 0:
            return G, T


def _grid_task(args):
    (seed, sim, fi, ni, gi, di, settings, point, alpha_modes) = args
    fam_name, family, phi = GRID_FAMILIES[fi]
    lam_N, lam_G = GRID_LAMBDAS[ni], GRID_LAMBDAS[gi]
    des_name, n_sites, n_rep = GRID_DESIGNS[di]
    _, T = _grid_truth(seed, fi, ni, gi, sim, lam_N, lam_G)
    # every design reads its counts from one pool of exchangeable draws, so
    # the designs are compared on common random numbers
    pool = simulate_counts(T, GRID_ALPHA, np.full(_POOL_SIZE, GRID_COVERAGE), 1, family, phi,
                           _rng(seed, 11, fi, ni, gi, sim)).ravel()
    y = pool[:n_sites * n_rep].reshape(n_sites, n_rep)
    data = SurveyDataset.from_arrays(y, np.full(n_sites, GRID_COVERAGE))
    out = []
    for ai, (a_name, a_prior) in enumerate(alpha_modes):
        for pi, (p_name, p_N, p_G) in enumerate(GRID_PRIORS):
            config = ModelConfig(family, p_G, p_N, a_prior,
                                 _FLAT if family is Family.NEGBIN else None)
            rec = _fit_record(sim, T, data, config, settings,
                              _int_seed(seed, 12, fi, ni, gi, ai, pi, sim), point)
            out.append((grid_label(fam_name, a_name, lam_N, lam_G, p_name, des_name), rec))
    return out


def run_appendix_grid(scale_factor: float = 1.0, mcmc_settings: Optional[McmcSettings] = None,
                      seed: int = 0, alpha_wrong: Optional[float] = None, point: str = "mean",
                      n_workers: int = 1) -> List[ScenarioResult]:
    """Full factorial: family x alpha treatment x lambda_N x lambda_G x prior x design.

    The default grid has 3 x 2 x 2 x 2 x 4 x 3 = 288 cells; passing
    ``alpha_wrong`` adds a third alpha treatment fixed at that value.  True
    (G, T) draws are shared by every cell with the same family, lambda_N,
    lambda_G and simulation index.  Counts come from one pool of 100 draws
    per simulation (the 100x1 design uses all of it, 10x10 reshapes it and
    10x1 takes the first ten), and the MCMC seed of a cell does not depend
    on the design, so prior, alpha and design comparisons are all paired.
    """
    n_sim = grid_n_simulations(scale_factor)
    point = _check_point(point)
    settings = mcmc_settings or replace(EXPERIMENT_MCMC)
    alpha_modes = grid_alpha_modes(alpha_wrong)
    index = itertools.product(range(len(GRID_FAMILIES)), range(len(GRID_LAMBDAS)),
                              range(len(GRID_LAMBDAS)), range(len(GRID_DESIGNS)))
    tasks = [(seed, sim, fi, ni, gi, di, settings, point, alpha_modes)
             for fi, ni, gi, di in index for sim in range(n_sim)]
    by_label = _collect(_map(_grid_task, tasks, n_workers))

    results = []
    for fam, (a_name, _), lam_N, lam_G, (p_name, _, _), (d_name, n_sites, n_rep) in itertools.product(
            GRID_FAMILIES, alpha_modes, GRID_LAMBDAS, GRID_LAMBDAS, GRID_PRIORS, GRID_DESIGNS):
        label = grid_label(fam[0], a_name, lam_N, lam_G, p_name, d_name)
        params = {"family": fam[0], "phi": fam[2], "alpha_mode": a_name, "alpha_true": GRID_ALPHA,
                  "lambda_N": lam_N, "lambda_G": lam_G, "prior": p_name, "design": d_name,
                  "n_sites": n_sites, "n_replicates": n_rep}
        results.append(aggregate(label, by_label[label], params))
    return results


def _select(results, **where):
    return [r for r in results if all(r.params.get(k) == v for k, v in where.items())]


def grid_checks(results: Sequence[ScenarioResult], family: str = "poisson") -> dict:
    """Qualitative properties of a grid run, restricted to one family.

    Returns a dict with

    * ``prior_spread``: over alpha-fixed cells, the largest spread in mean
      relative bias across priors for matching (lambda_N, lambda_G, design);
    * ``gamma31_bias_5`` / ``gamma31_bias_10``: mean |bias| of alpha-uniform,
      Gamma(3,1) cells at lambda_N = lambda_G = 5 and 10;
    * ``replicate_gap``: largest |bias(10x10) - bias(100x1)| over matching cells;
    * ``bias_10_sites`` / ``bias_100_sites``: mean |bias| of alpha-fixed,
      flat-prior cells for the 10x1 and 100x1 designs.
    """
    out = {}
    fixed = _select(results, family=family, alpha_mode="fixed")
    spread = 0.0
    for lam_N, lam_G, (d_name, _, _) in itertools.product(GRID_LAMBDAS, GRID_LAMBDAS, GRID_DESIGNS):
        biases = [r.mean_relative_bias for r in _select(fixed, lambda_N=lam_N, lambda_G=lam_G,
                                                        design=d_name)]
        if biases:
            spread = max(spread, max(biases) - min(biases))
    out["prior_spread"] = spread

    for lam in GRID_LAMBDAS:
        cells = _select(results, family=family, alpha_mode="uniform", prior="gamma_3_1",
                        lambda_N=lam, lambda_G=lam)
        out[f"gamma31_bias_{lam:g}"] = float(np.mean([abs(r.mean_relative_bias) for r in cells]))

    gap = 0.0
    for r in _select(results, family=family, design="10x10"):
        twin = _select(results, family=family, design="100x1", alpha_mode=r.params["alpha_mode"],
                       prior=r.params["prior"], lambda_N=r.params["lambda_N"],
                       lambda_G=r.params["lambda_G"])
        if twin:
            gap = max(gap, abs(r.mean_relative_bias - twin[0].mean_relative_bias))
    out["replicate_gap"] = gap

    for d_name, key in (("10x1", "bias_10_sites"), ("100x1", "bias_100_sites")):
        cells = _select(results, family=family, alpha_mode="fixed", prior="gamma_flat", design=d_name)
        out[key] = float(np.mean([abs(r.mean_relative_bias) for r in cells]))
    return out


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_results_csv(results: Sequence[ScenarioResult], path) -> Path:
    """One row per scenario; parameter columns follow the fixed summary columns."""
    path = Path(path)
    base = list(ScenarioResult("", 0, 0, 0, 0, []).to_row())
    extra = sorted({k for r in results for k in r.params})
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(base + extra)
        for r in results:
            row = r.to_row()
            w.writerow([_fmt(row[k]) for k in base] + [_fmt(r.params.get(k, "")) for k in extra])
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return "" if v is None else v


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def results_to_json(study: str, results: Sequence[ScenarioResult], seed: int, **meta) -> dict:
    doc = {"study": study, "seed": int(seed), "scenarios": [r.to_dict() for r in results]}
    doc.update(meta)
    return _json_safe(doc)


def write_results_json(study: str, results: Sequence[ScenarioResult], path, seed: int, **meta) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(results_to_json(study, results, seed, **meta), fh, indent=2)
        fh.write("\n")
    return path
