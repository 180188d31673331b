"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 estimation failure.  On failure every file written by the command is
removed and a one-line JSON error report goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

import jsonschema
import numpy as np

from . import __version__
from . import experiments as ex
from .dataio import (RunConfig, format_dataset, load_config, load_dataset, load_yaml,
                     model_to_dict)
from .errors import ConfigurationError, TriPoissonError
from .inference import FitResult, McmcSettings, run_mcmc
from .model_core import Family, ModelConfig, SurveyDataset
from .presets import FLAT_GAMMA, builtin_presets, get_preset
from .schemas import DESIGN_SCHEMA, TP_PARAMS_SCHEMA
from .survey_sim import SurveyDesign, simulate_survey, simulate_tp_data

PARAM_ORDER = ("T", "G", "lambda_G", "lambda_N", "alpha", "phi")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


class _Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: List[Path] = []
        self._made_dir = False

    def path(self, name: str) -> Path:
        if not self.out_dir.exists():
            self.out_dir.mkdir(parents=True)
            self._made_dir = True
        p = self.out_dir / name
        self.written.append(p)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8", newline="\n")
        return p

    def write_json(self, name: str, doc) -> Path:
        return self.write_text(name, json.dumps(_json_safe(doc), indent=2) + "\n")

    def rollback(self):
        for p in self.written:
            if p.exists():
                p.unlink()
        if self._made_dir:
            try:
                self.out_dir.rmdir()
            except OSError:
                pass


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


# ---------------------------------------------------------------------------
# shared resolution of model inputs
# ---------------------------------------------------------------------------

def _resolve_seed(args) -> int:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("--seed must be nonnegative")
        return int(args.seed)
    seed = int(np.random.SeedSequence().entropy % (2 ** 63))
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _mcmc_settings(args, base: McmcSettings, seed: int) -> McmcSettings:
    changes = {"seed": seed}
    if args.chains is not None:
        changes["n_chains"] = args.chains
    if args.iterations is not None:
        changes["n_iterations"] = args.iterations
        if args.burn_in is None and base.burn_in >= args.iterations:
            changes["burn_in"] = args.iterations // 4
    if args.burn_in is not None:
        changes["burn_in"] = args.burn_in
    return replace(base, **changes)


def _model_inputs(args):
    """(dataset, RunConfig, source label, preset name) for fit and compare-dic."""
    if args.preset:
        if args.config is not None:
            raise ConfigurationError("give either --preset or a config file, not both")
        preset = get_preset(args.preset)
        data = load_dataset(args.dataset) if args.dataset else preset.require_dataset()
        source = args.dataset or f"preset:{preset.name}"
        run = RunConfig(preset.config, McmcSettings(), preset.study,
                        preset.config.prior_phi or FLAT_GAMMA)
        return data, run, source, preset.name
    if args.dataset is None or args.config is None:
        raise ConfigurationError("need <dataset> and <config>, or --preset")
    return load_dataset(args.dataset), load_config(args.config), args.dataset, None


def _fit_document(fit: FitResult, config: ModelConfig, data: SurveyDataset, source: str,
                  preset: Optional[str], include_chains: bool) -> dict:
    doc = fit.to_dict(include_chains=include_chains)
    doc["model"] = model_to_dict(config)
    doc["dataset"] = {"n_sites": data.n_sites, "n_replicates": data.n_replicates, "source": str(source)}
    doc["preset"] = preset
    return doc


def _summary_table(fit: FitResult) -> str:
    head = f"{'param':<10}{'mean':>12}{'sd':>11}{'2.5%':>11}{'median':>11}{'97.5%':>11}{'ess':>9}{'rhat':>8}"
    lines = [head]
    for name in PARAM_ORDER:
        s = fit.summaries.get(name)
        if s is None:
            continue
        rhat = f"{s.rhat:.3f}" if s.rhat is not None else "-"
        lines.append(f"{name:<10}{s.mean:>12.4g}{s.sd:>11.4g}{s.q2_5:>11.4g}{s.median:>11.4g}"
                     f"{s.q97_5:>11.4g}{s.ess:>9.0f}{rhat:>8}")
    lines.append(f"DIC {fit.dic:.3f} (Dbar {fit.dbar:.3f}, pD {fit.p_d:.3f})")
    return "\n".join(lines)


def _summary_csv(fit: FitResult) -> str:
    rows = [["param", "mean", "sd", "q2_5", "median", "q97_5", "ess", "rhat"]]
    for name in PARAM_ORDER:
        s = fit.summaries.get(name)
        if s is not None:
            rows.append([name, repr(s.mean), repr(s.sd), repr(s.q2_5), repr(s.median),
                         repr(s.q97_5), repr(s.ess), "" if s.rhat is None else repr(s.rhat)])
    return "".join(",".join(r) + "\n" for r in rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args, out: _Outputs) -> int:
    data, run, source, preset = _model_inputs(args)
    config = run.model_for(args.family) if args.family else run.model
    seed = _resolve_seed(args)
    settings = _mcmc_settings(args, run.mcmc, seed)
    fit = run_mcmc(data, config, settings)
    out.write_json("fit.json", _fit_document(fit, config, data, source, preset, args.include_chains))
    out.write_text("fit_summary.csv", _summary_csv(fit))
    print(_summary_table(fit))
    return 0


def cmd_compare_dic(args, out: _Outputs) -> int:
    data, run, source, preset = _model_inputs(args)
    seed = _resolve_seed(args)
    settings = _mcmc_settings(args, run.mcmc, seed)
    fits, docs = {}, {}
    for fam in (Family.POISSON, Family.NEGBIN):
        config = run.model_for(fam)
        fits[fam.value] = run_mcmc(data, config, settings)
        docs[fam.value] = _fit_document(fits[fam.value], config, data, source, preset, False)
    dic = {k: f.dic for k, f in fits.items()}
    winner = min(dic, key=dic.get)
    out.write_json("compare_dic.json", {"seed": seed, "fits": docs, "dic": dic, "winner": winner})
    for k, f in fits.items():
        s = f.summaries["T"]
        print(f"{k:<8} DIC {f.dic:10.3f}   T mean {s.mean:.4g}  95% CrI ({s.q2_5:.4g}, {s.q97_5:.4g})")
    print(f"winner: {winner}")
    return 0


def _validated_yaml(path, schema, what):
    tree = load_yaml(path) if path else {}
    try:
        jsonschema.validate(tree, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"{what} {path}: {where}: {exc.message}") from None
    return tree


def cmd_simulate_survey(args, out: _Outputs) -> int:
    design = SurveyDesign(**_validated_yaml(args.design, DESIGN_SCHEMA, "design"))
    seed = _resolve_seed(args)
    survey, counts, nu = simulate_survey(design, np.random.default_rng(seed))
    lines = ["transect,distance_m\n"]
    for k, d in enumerate(survey.distances, start=1):
        lines.extend(f"t{k},{x!r}\n" for x in d.tolist())
    out.write_text("survey_distances.csv", "".join(lines))
    data = SurveyDataset.from_arrays(counts, nu, [f"t{k}" for k in range(1, len(counts) + 1)])
    out.write_text("survey_counts.csv", format_dataset(data))
    out.write_json("survey.json", {
        "seed": seed, "design": asdict(design),
        "transect_lengths_m": survey.transect_lengths_m.tolist(),
        "coverage": nu.tolist(), "counts": [int(c) for c in counts],
        "n_detections": int(counts.sum()),
        "true_abundance": ex.table1_true_abundance(design)})
    print(f"{len(counts)} transects, detections per transect: {', '.join(str(int(c)) for c in counts)}")
    return 0


def cmd_simulate_tp(args, out: _Outputs) -> int:
    p = _validated_yaml(args.params, TP_PARAMS_SCHEMA, "parameters")
    cov = p["coverage"]
    if isinstance(cov, list):
        if "n_sites" in p and p["n_sites"] != len(cov):
            raise ConfigurationError("n_sites disagrees with the length of coverage")
        nu = np.asarray(cov, dtype=float)
    else:
        nu = np.full(p.get("n_sites", 1), float(cov))
    family = Family.parse(p.get("family", "poisson"))
    phi = p.get("phi")
    if family is Family.NEGBIN and phi is None:
        raise ConfigurationError("negbin simulation needs phi")
    seed = _resolve_seed(args)
    data, G, T = simulate_tp_data(p["lambda_G"], p["lambda_N"], p["alpha"], nu,
                                  p.get("n_replicates", 1), family, phi,
                                  np.random.default_rng(seed))
    out.write_text("tp_dataset.csv", format_dataset(data))
    out.write_json("tp_truth.json", {
        "seed": seed, "G": G, "T": T, "lambda_G": p["lambda_G"], "lambda_N": p["lambda_N"],
        "alpha": p["alpha"], "family": family.value,
        "phi": phi if family is Family.NEGBIN else None,
        "n_sites": data.n_sites, "n_replicates": data.n_replicates})
    print(f"G = {G}, T = {T}; {data.n_sites} sites x {data.n_replicates} replicates")
    return 0


def _check_scale(scale: float) -> float:
    if not 0 < scale <= 1:
        raise ConfigurationError(f"--scale must lie in (0, 1], got {scale}")
    return scale


def cmd_experiment(args, out: _Outputs) -> int:
    scale = _check_scale(args.scale)
    seed = _resolve_seed(args)
    settings = _mcmc_settings(args, replace(ex.EXPERIMENT_MCMC), seed)
    meta = {"scale": scale}
    if args.study == "table1":
        n = max(1, int(round(50 * scale)))
        results = ex.run_table1(n, settings, seed, models=args.models, point=args.point,
                                n_workers=args.workers)
    elif args.study == "alpha-study":
        n = max(1, int(round(50 * scale)))
        results = ex.run_alpha_study(n, settings, seed, alpha_wrong=args.alpha_wrong,
                                     point=args.point, n_workers=args.workers)
    else:
        n = ex.grid_n_simulations(scale)
        results = ex.run_appendix_grid(scale, settings, seed, point=args.point,
                                       n_workers=args.workers)
        meta["checks"] = ex.grid_checks(results)
    meta["n_simulations"] = n
    stem = args.study.replace("-", "_")
    ex.write_results_csv(results, out.path(f"{stem}.csv"))
    ex.write_results_json(args.study, results, out.path(f"{stem}.json"), seed, **meta)
    print(f"{'scenario':<48}{'bias':>9}{'ci_lo':>9}{'ci_hi':>9}{'cover':>7}")
    for r in results:
        print(f"{r.label:<48}{r.mean_relative_bias:>9.3f}{r.rel_bias_ci_lower:>9.3f}"
              f"{r.rel_bias_ci_upper:>9.3f}{r.coverage_rate:>7.2f}")
    failed = [r.label for r in results if r.failed]
    if failed:
        print(f"failed scenarios (more than 10% of simulations errored): {', '.join(failed)}",
              file=sys.stderr)
        return 3
    return 0


def cmd_presets(args, out: _Outputs) -> int:
    for p in builtin_presets():
        tag = "bundled data" if p.has_data else "needs dataset"
        print(f"{p.name:<10} [{tag}] {p.provenance}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_globals(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master random seed (default: fresh entropy, printed)")
    p.add_argument("--chains", type=int, default=d(None), help="number of MCMC chains")
    p.add_argument("--iterations", type=int, default=d(None), help="MCMC iterations per chain")
    p.add_argument("--burn-in", type=int, default=d(None), help="burn-in iterations per chain")
    p.add_argument("--out-dir", default=d("."), help="directory for output files")
    p.add_argument("--scale", type=float, default=d(1.0), help="simulation-count scale for experiments, in (0, 1]")
    p.add_argument("--workers", type=int, default=d(1), help="worker processes for experiments")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tripoisson", description="Triple Poisson abundance estimation from vestige counts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        p.set_defaults(func=func)
        return p

    for name, func, help_ in (("fit", cmd_fit, "fit one model and write fit.json"),
                              ("compare-dic", cmd_compare_dic, "fit Poisson and NB and compare DIC")):
        p = add(name, func, help_)
        p.add_argument("dataset", nargs="?", help="dataset CSV (site_id,replicate,count,coverage)")
        p.add_argument("config", nargs="?", help="YAML model configuration")
        p.add_argument("--preset", help="built-in case study (see `presets`)")
        if name == "fit":
            p.add_argument("--family", choices=["poisson", "negbin"], help="override the observation family")
            p.add_argument("--include-chains", action="store_true", help="store raw draws in fit.json")

    p = add("simulate-survey", cmd_simulate_survey, "simulate a line-transect survey")
    p.add_argument("design", nargs="?", help="YAML survey design (default: built-in design)")
    p = add("simulate-tp", cmd_simulate_tp, "simulate counts from the triple Poisson hierarchy")
    p.add_argument("params", help="YAML simulation parameters")

    p = add("experiment", cmd_experiment, "run a simulation study")
    p.add_argument("study", choices=["table1", "alpha-study", "appendix-grid"])
    p.add_argument("--models", nargs="+", help="table1 only: subset of DS1..DS7, TP1..TP4")
    p.add_argument("--alpha-wrong", type=float, default=45.0, help="alpha-study: misinformed fixed alpha")
    p.add_argument("--point", choices=["mean", "median"], default="mean", help="posterior point estimate")

    add("presets", cmd_presets, "list built-in case-study presets")
    return parser


def _report(kind: str, message: str, code: int):
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        _report("UsageError", str(exc), 1)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    out = _Outputs(Path(args.out_dir))
    try:
        return args.func(args, out)
    except TriPoissonError as exc:
        out.rollback()
        _report(type(exc).__name__, str(exc), exc.exit_code)
        return exc.exit_code
    except Exception as exc:  # unexpected failure: still clean up
        out.rollback()
        _report(type(exc).__name__, str(exc), 3)
        return 3


cli_main = main


if __name__ == "__main__":
    sys.exit(main())
