import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from tripoisson.cli import main
from tripoisson.dataio import (format_dataset, load_config, load_dataset, parse_config, parse_dataset,
                               prior_from_dict, prior_to_dict, write_dataset)
from tripoisson.errors import ConfigurationError, DataError, GeometryError, MissingDataError
from tripoisson.model_core import Family, FixedValue, GammaPrior, SurveyDataset, UniformPrior
from tripoisson.presets import builtin_presets, coverage_from_geometry, get_preset, territory_prior
from tripoisson.schemas import SCHEMAS, schema_text
from tripoisson.survey_sim import simulate_tp_data

DOCS = Path(__file__).resolve().parents[1] / "docs" / "schemas"
FAST = ["--chains", "2", "--iterations", "600", "--burn-in", "200"]

BASIC_CONFIG = {
    "model": {"family": "negbin",
              "priors": {"lambda_G": {"distribution": "gamma", "parameters": [5, 1], "parameterization": "rate"},
                         "lambda_N": {"distribution": "gamma", "parameters": [10, 1], "parameterization": "rate"},
                         "alpha": {"distribution": "uniform", "parameters": [0, 50]},
                         "phi": {"distribution": "gamma", "parameters": [0.01, 0.01],
                                 "parameterization": "rate"}}},
    "mcmc": {"n_chains": 2, "n_iterations": 600, "burn_in": 200},
}


def _write_yaml(path, tree):
    path.write_text(yaml.safe_dump(tree))
    return path


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------

PECCARY_CSV = ("site_id,replicate,count,coverage\n"
               "transect_8km,1,7,0.000733104238\n"
               "transect_12km,1,1,0.00109965636\n")


def test_parse_peccary_file():
    data = parse_dataset(PECCARY_CSV)
    assert data.n_sites == 2 and data.n_replicates == 1
    assert data.counts.ravel().tolist() == [7, 1]


@pytest.mark.parametrize("text, fragment", [
    ("", "empty"),
    ("site,replicate,count,coverage\na,1,1,0.1\n", "line 1"),
    ("site_id,replicate,count,coverage\na,1,1,1.2\n", "line 2"),
    ("site_id,replicate,count,coverage\na,1,1,0.1\na,1,2,0.1\n", "duplicate"),
    ("site_id,replicate,count,coverage\na,1,-1,0.1\n", "nonnegative"),
    ("site_id,replicate,count,coverage\na,1,2.5,0.1\n", "integer"),
    ("site_id,replicate,count,coverage\na,1,1,0.1\na,2,1,0.2\n", "line 3"),
    ("site_id,replicate,count,coverage\na,1,1,0.1\n,1,1,0.1\n", "site_id"),
    ("site_id,replicate,count,coverage\na,1,1\n", "4 fields"),
    ("site_id,replicate,count,coverage\n", "no data"),
])
def test_dataset_errors(text, fragment):
    with pytest.raises(DataError, match=fragment):
        parse_dataset(text)


def test_ragged_replicates_name_site():
    text = "site_id,replicate,count,coverage\na,1,1,0.1\na,2,1,0.1\nb,1,3,0.2\n"
    with pytest.raises(DataError, match="'b'"):
        parse_dataset(text)


def test_missing_dataset_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path / "nope.csv")


@given(counts=st.lists(st.lists(st.integers(0, 10 ** 6), min_size=3, max_size=3), min_size=1, max_size=6),
       cov=st.floats(1e-6, 0.999))
@settings(max_examples=40)
def test_dataset_round_trip(counts, cov):
    nu = [cov * (k + 1) / (len(counts) + 1) for k in range(len(counts))]
    data = SurveyDataset.from_arrays(counts, nu)
    again = parse_dataset(format_dataset(data))
    assert again == data


def test_write_then_load(tmp_path):
    data = SurveyDataset.from_arrays([[1, 2], [3, 4]], [0.1, 0.25], ["x", "y"])
    assert load_dataset(write_dataset(data, tmp_path / "d.csv")) == data
    raw = (tmp_path / "d.csv").read_bytes()
    assert raw.startswith(b"site_id,replicate,count,coverage\n") and b"\r" not in raw


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

def test_config_parses(tmp_path):
    run = load_config(_write_yaml(tmp_path / "c.yaml", BASIC_CONFIG))
    assert run.model.family is Family.NEGBIN
    assert run.model.prior_alpha == UniformPrior(0.0, 50.0)
    assert run.mcmc.n_iterations == 600
    assert run.model_for("poisson").prior_phi is None


@pytest.mark.parametrize("mutate", [
    lambda t: t.update(extra=1),
    lambda t: t["model"].update(colour="red"),
    lambda t: t["model"]["priors"]["alpha"].update(parameterization="log"),
    lambda t: t["model"]["priors"]["alpha"].update(distribution="beta"),
    lambda t: t["mcmc"].update(n_chains=0),
    lambda t: t["model"]["priors"].pop("lambda_N"),
    lambda t: t["model"]["priors"]["lambda_G"].pop("parameterization"),
])
def test_config_rejects(mutate):
    tree = json.loads(json.dumps(BASIC_CONFIG))
    mutate(tree)
    with pytest.raises(ConfigurationError):
        parse_config(tree)


def test_gamma_parameterizations():
    rate = prior_from_dict({"distribution": "gamma", "parameters": [2, 4]})
    scale = prior_from_dict({"distribution": "gamma", "parameters": [2, 4], "parameterization": "scale"})
    assert rate == GammaPrior(2.0, 4.0)
    assert scale.rate == pytest.approx(0.25)
    for p in (rate, UniformPrior(1.0, 3.0), FixedValue(7.0)):
        assert prior_from_dict(prior_to_dict(p)) == p


def test_schema_files_are_current():
    for name in SCHEMAS:
        assert (DOCS / f"{name}.json").read_text() == schema_text(name)


# ---------------------------------------------------------------------------
# geometry and presets
# ---------------------------------------------------------------------------

def test_coverage_examples():
    assert coverage_from_geometry(8000, 2, 43.65) == pytest.approx(32000 / 43.65e6, rel=1e-12)
    assert round(coverage_from_geometry(8000, 2, 43.65), 6) == 0.000733
    assert round(coverage_from_geometry(12000, 2, 43.65), 4) == 0.0011
    assert coverage_from_geometry(500, 2, 8.0) == pytest.approx(2 * coverage_from_geometry(500, 2, 16.0))
    with pytest.raises(GeometryError):
        coverage_from_geometry(1000, 600, 1.0)
    with pytest.raises(GeometryError):
        coverage_from_geometry(0, 2, 1.0)


@pytest.mark.parametrize("args, groups", [((879, 2.5, 11), 351), ((2448, 5, 12), 489),
                                          ((13.9, 0.02, 0.05), 695)])
def test_territory_prior_groups(args, groups):
    tp = territory_prior(*args)
    assert tp.max_groups == groups
    assert tp.prior.shape == 1.0
    assert tp.prior.mean == pytest.approx(round(0.1 * groups))
    assert tp.alternative.rate == round(0.1 * groups)
    max_groups, prior = tp
    assert (max_groups, prior) == (tp.max_groups, tp.prior)


def test_territory_prior_validation():
    with pytest.raises(ConfigurationError):
        territory_prior(10, 5, 2)


def test_preset_priors():
    kit, red, pec = get_preset("kit_fox"), get_preset("red-fox"), get_preset("peccary")
    assert kit.config.prior_alpha == UniformPrior(0.0, 112.0) == UniformPrior(0.0, 8.0 * 14)
    assert red.config.prior_alpha == UniformPrior(0.0, 240.0)
    assert pec.config.prior_alpha == GammaPrior(0.01, 0.01)
    assert pec.config.prior_lambda_N == GammaPrior(8.0, 1.0)
    assert pec.config.prior_lambda_G == GammaPrior(4.0, 1.0)
    sika_a = get_preset("sika_A")
    assert sika_a.config.prior_lambda_G == GammaPrior.from_scale(1.0, 72.0)
    assert sika_a.alternative_priors["lambda_G"] == GammaPrior(1.0, 72.0)
    assert sika_a.config.prior_alpha == UniformPrior(0.0, 3500.0)
    assert {p.name for p in builtin_presets()} >= {"peccary", "kit_fox", "red_fox", "sika_A"}


def test_peccary_preset_data():
    pec = get_preset("peccary")
    data = pec.require_dataset()
    assert data.counts.ravel().tolist() == [7, 1]
    np.testing.assert_allclose(data.coverage, [32000 / 43.65e6, 48000 / 43.65e6])


def test_data_less_presets():
    for p in builtin_presets():
        if p.name != "peccary":
            assert not p.has_data
            with pytest.raises(MissingDataError, match="Data source"):
                p.require_dataset()
    with pytest.raises(ConfigurationError):
        get_preset("wombat")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_preset_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, out, _ = _run(["fit", "--preset", "peccary", "--family", "negbin", "--seed", "3",
                             "--out-dir", str(d)] + FAST, capsys)
        assert code == 0 and "T " in out and "DIC" in out
    for name in ("fit.json", "fit_summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    doc = json.loads((a / "fit.json").read_text())
    jsonschema.validate(doc, SCHEMAS["fit_result"])
    assert doc["preset"] == "peccary" and doc["model"]["family"] == "negbin"


def test_fit_from_files(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text(PECCARY_CSV)
    cfg = _write_yaml(tmp_path / "c.yaml", BASIC_CONFIG)
    code, _, _ = _run(["fit", str(data), str(cfg), "--seed", "1", "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 0
    jsonschema.validate(json.loads((tmp_path / "o" / "fit.json").read_text()), SCHEMAS["fit_result"])


def test_seed_printed_when_absent(tmp_path, capsys):
    code, _, err = _run(["fit", "--preset", "peccary", "--out-dir", str(tmp_path)] + FAST, capsys)
    assert code == 0
    assert err.startswith("seed: ") and int(err.split()[1]) >= 0


def test_compare_dic_prefers_negbin(tmp_path, capsys):
    rng = np.random.default_rng(8)
    data, _, _ = simulate_tp_data(5.0, 10.0, 20.0, [0.01] * 30, 1, "negbin", 0.2, rng)
    path = write_dataset(data, tmp_path / "nb.csv")
    cfg = _write_yaml(tmp_path / "c.yaml", BASIC_CONFIG)
    code, out, _ = _run(["compare-dic", str(path), str(cfg), "--seed", "2",
                         "--iterations", "3000", "--burn-in", "1000", "--out-dir", str(tmp_path / "o")],
                        capsys)
    assert code == 0 and "winner: negbin" in out
    doc = json.loads((tmp_path / "o" / "compare_dic.json").read_text())
    jsonschema.validate(doc, SCHEMAS["compare_dic"])
    assert doc["winner"] == "negbin" and doc["dic"]["negbin"] < doc["dic"]["poisson"]


def test_simulate_tp(tmp_path, capsys):
    params = _write_yaml(tmp_path / "p.yaml", {"lambda_G": 5, "lambda_N": 10, "alpha": 20,
                                               "coverage": [0.1, 0.2], "n_replicates": 3})
    code, _, _ = _run(["simulate-tp", str(params), "--seed", "4", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    truth = json.loads((tmp_path / "tp_truth.json").read_text())
    jsonschema.validate(truth, SCHEMAS["tp_truth"])
    data = load_dataset(tmp_path / "tp_dataset.csv")
    assert (data.n_sites, data.n_replicates) == (2, 3)
    assert truth["G"] >= 0 and truth["T"] >= 0 and (truth["G"] > 0 or truth["T"] == 0)


def test_simulate_survey(tmp_path, capsys):
    code, out, _ = _run(["simulate-survey", "--seed", "5", "--out-dir", str(tmp_path)], capsys)
    assert code == 0 and "2 transects" in out
    doc = json.loads((tmp_path / "survey.json").read_text())
    jsonschema.validate(doc, SCHEMAS["survey"])
    assert doc["true_abundance"] == pytest.approx(100 / 3)
    counts = load_dataset(tmp_path / "survey_counts.csv").counts.ravel()
    assert counts.tolist() == doc["counts"]
    n_rows = len((tmp_path / "survey_distances.csv").read_text().splitlines()) - 1
    assert n_rows == doc["n_detections"]


def test_experiment_outputs(tmp_path, capsys):
    code, out, _ = _run(["experiment", "table1", "--models", "DS1", "TP1", "--scale", "0.04",
                         "--seed", "6", "--out-dir", str(tmp_path)] + FAST, capsys)
    assert code == 0 and "DS1" in out
    doc = json.loads((tmp_path / "table1.json").read_text())
    jsonschema.validate(doc, SCHEMAS["study_results"])
    assert [s["label"] for s in doc["scenarios"]] == ["DS1", "TP1"]
    assert (tmp_path / "table1.csv").read_text().count("\n") == 3


@pytest.mark.parametrize("argv, code", [
    (["bogus"], 1),
    (["fit"], 1),
    (["fit", "--preset", "kit_fox"], 2),
    (["fit", "--preset", "peccary", "--seed", "-1"], 1),
    (["experiment", "table1", "--scale", "2"], 1),
])
def test_exit_codes(tmp_path, capsys, argv, code):
    got, _, err = _run(argv + ["--out-dir", str(tmp_path / "o")], capsys)
    assert got == code
    report = json.loads(err.strip().splitlines()[-1])
    assert report["exit_code"] == code and report["message"]
    assert not (tmp_path / "o").exists()


def test_bad_dataset_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("site_id,replicate,count,coverage\na,1,1,1.5\n")
    cfg = _write_yaml(tmp_path / "c.yaml", BASIC_CONFIG)
    code, _, err = _run(["fit", str(bad), str(cfg), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 2 and "line 2" in err


def test_partial_outputs_removed(tmp_path, capsys, monkeypatch):
    import tripoisson.cli as cli

    def explode(*a, **k):
        raise RuntimeError("boom")

    # fit.json is written before the summary CSV; a failure there must remove it
    monkeypatch.setattr(cli, "_summary_csv", explode)
    out = tmp_path / "o"
    code, _, err = _run(["fit", "--preset", "peccary", "--seed", "1", "--out-dir", str(out)] + FAST, capsys)
    assert code == 3 and "boom" in err
    assert not out.exists()


def test_presets_listing(capsys):
    code, out, _ = _run(["presets"], capsys)
    assert code == 0
    assert "peccary" in out and "bundled data" in out and "sika_A" in out
    assert len(out.strip().splitlines()) == len(builtin_presets())
