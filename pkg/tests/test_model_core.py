import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tripoisson.errors import ConfigurationError, DataError, DomainError
from tripoisson.model_core import (DecayParams, Family, FixedValue, GammaPrior, LatentState,
                                   ModelConfig, SiteRecord, SurveyDataset, UniformPrior,
                                   accumulate_vestiges, latent_log_prior, log_pmf_negbin,
                                   log_pmf_poisson, log_posterior, log_prior, observation_log_lik,
                                   steady_state_alpha)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def _nb_exact(y, mu, phi):
    # scipy's nbinom loses digits for very large phi, so the reference is mpmath
    mpmath.mp.dps = 40
    y, mu, phi = mpmath.mpf(y), mpmath.mpf(mu), mpmath.mpf(phi)
    return float(mpmath.loggamma(y + phi) - mpmath.loggamma(phi) - mpmath.loggamma(y + 1)
                 + phi * mpmath.log(phi / (phi + mu)) + y * mpmath.log(mu / (phi + mu)))


def test_poisson_degenerate_mean():
    assert log_pmf_poisson(0, 0.0) == 0.0
    assert log_pmf_poisson(2, 0.0) == -math.inf


def test_poisson_zero_count():
    assert log_pmf_poisson(0, 2.0) == pytest.approx(-2.0, abs=1e-15)


def test_poisson_against_arbitrary_precision():
    mpmath.mp.dps = 40
    exact = mpmath.log(mpmath.mpf("2.5") ** 3 * mpmath.exp(-mpmath.mpf("2.5")) / 6)
    assert log_pmf_poisson(3, 2.5) == pytest.approx(float(exact), abs=1e-13)
    assert float(exact) == pytest.approx(-1.5428873, abs=1e-7)


@given(y=st.integers(0, 200), mu=st.floats(1e-3, 300.0))
def test_poisson_matches_scipy(y, mu):
    assert log_pmf_poisson(y, mu) == pytest.approx(stats.poisson.logpmf(y, mu), rel=1e-10, abs=1e-10)


@given(y=st.integers(0, 200), mu=st.floats(1e-3, 300.0), phi=st.floats(1e-2, 1e3))
def test_negbin_matches_scipy(y, mu, phi):
    ref = stats.nbinom.logpmf(y, phi, phi / (phi + mu))
    assert log_pmf_negbin(y, mu, phi) == pytest.approx(ref, rel=1e-8, abs=1e-8)


def test_negbin_degenerate_mean():
    assert log_pmf_negbin(0, 0.0, 1.0) == 0.0
    assert log_pmf_negbin(1, 0.0, 1.0) == -math.inf


@given(y=st.integers(0, 50), mu=st.floats(1e-4, 100.0), phi=st.floats(1e3, 1e9))
@settings(max_examples=60)
def test_negbin_large_phi_exact(y, mu, phi):
    assert log_pmf_negbin(y, mu, phi) == pytest.approx(_nb_exact(y, mu, phi), rel=1e-10, abs=1e-10)


def test_negbin_large_phi_is_poisson():
    assert log_pmf_negbin(2, 3.0, 1e8) == pytest.approx(log_pmf_poisson(2, 3.0), abs=1e-5)


def test_negbin_large_phi_limit_grid():
    for y in range(0, 51, 5):
        for mu in (0.5, 3.0, 10.0, 20.0):
            assert abs(log_pmf_negbin(y, mu, 1e8) - log_pmf_poisson(y, mu)) < 1e-4


def test_negbin_entry_from_normalised_table():
    table = np.array([math.exp(log_pmf_negbin(y, 2.0, 0.5)) for y in range(501)])
    assert table.sum() == pytest.approx(1.0, abs=1e-10)
    # closed form: Gamma(4.5) / (Gamma(0.5) 4!) * (0.5/2.5)^0.5 * (2/2.5)^4
    mpmath.mp.dps = 40
    exact = (mpmath.gamma(4.5) / (mpmath.gamma(0.5) * 24) * mpmath.mpf("0.2") ** mpmath.mpf("0.5")
             * mpmath.mpf("0.8") ** 4)
    assert table[4] == pytest.approx(float(exact), rel=1e-12)


@pytest.mark.parametrize("mu", [0.1, 2.0, 17.5, 60.0])
@pytest.mark.parametrize("phi", [None, 0.2, 2.0, 50.0])
def test_pmf_normalisation(mu, phi):
    if phi is None:
        y_max = int(stats.poisson.isf(1e-12, mu)) + 5
        lp = [log_pmf_poisson(y, mu) for y in range(y_max + 1)]
    else:
        y_max = int(stats.nbinom.isf(1e-12, phi, phi / (phi + mu))) + 5
        lp = [log_pmf_negbin(y, mu, phi) for y in range(y_max + 1)]
    assert math.fsum(math.exp(v) for v in lp) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("bad", [(-1, 1.0), (1.5, 1.0), (1, -0.1), (1, math.inf)])
def test_poisson_domain_errors(bad):
    with pytest.raises(DomainError):
        log_pmf_poisson(*bad)


@pytest.mark.parametrize("phi", [0.0, -1.0, math.nan])
def test_negbin_rejects_bad_phi(phi):
    with pytest.raises(DomainError):
        log_pmf_negbin(1, 1.0, phi)


# ---------------------------------------------------------------------------
# likelihood tiers
# ---------------------------------------------------------------------------

def test_obs_loglik_zero_abundance():
    zeros = SurveyDataset.from_arrays([[0, 0], [0, 0]], [0.1, 0.2])
    assert observation_log_lik(zeros, 0, 2.0, None) == 0.0
    some = SurveyDataset.from_arrays([[0, 1]], [0.1])
    assert observation_log_lik(some, 0, 2.0, None) == -math.inf


def test_obs_loglik_unrolled():
    data = SurveyDataset.from_arrays([[3]], [0.5])
    assert observation_log_lik(data, 4, 2.0, None) == pytest.approx(log_pmf_poisson(3, 4.0), abs=1e-12)


@given(T=st.integers(1, 500), alpha=st.floats(0.05, 50.0), phi=st.floats(0.05, 1e7),
       counts=st.lists(st.integers(0, 80), min_size=2, max_size=6))
@settings(max_examples=60)
def test_obs_loglik_is_sum_of_terms(T, alpha, phi, counts):
    nu = np.linspace(0.01, 0.3, len(counts))
    data = SurveyDataset.from_arrays(np.array(counts)[:, None], nu)
    mu = alpha * T * nu
    pois = sum(stats.poisson.logpmf(y, m) for y, m in zip(counts, mu))
    nb = math.fsum(_nb_exact(y, m, phi) for y, m in zip(counts, mu))
    assert observation_log_lik(data, T, alpha, None) == pytest.approx(pois, rel=1e-9, abs=1e-8)
    assert observation_log_lik(data, T, alpha, phi, Family.NEGBIN) == pytest.approx(nb, rel=1e-8, abs=1e-7)


def test_latent_log_prior_examples():
    assert latent_log_prior(0, 0, 2.0, 5.0) == pytest.approx(-2.0)
    assert latent_log_prior(0, 3, 2.0, 5.0) == -math.inf
    expect = stats.poisson.logpmf(2, 3.0) + stats.poisson.logpmf(10, 10.0)
    assert latent_log_prior(2, 10, 3.0, 5.0) == pytest.approx(expect, abs=1e-12)


def test_log_posterior_outside_uniform_support():
    data = SurveyDataset.from_arrays([[4]], [0.2])
    cfg = ModelConfig(Family.POISSON, GammaPrior(2, 1), GammaPrior(3, 1), UniformPrior(0.0, 10.0))
    assert log_posterior(LatentState(2, 6, 1.0, 2.0, 12.0), data, cfg) == -math.inf


def test_log_posterior_all_fixed_empty_abundance():
    data = SurveyDataset.from_arrays([[0, 0, 0]], [0.2])
    cfg = ModelConfig(Family.POISSON, FixedValue(1.5), FixedValue(3.0), FixedValue(2.0))
    lp = log_posterior(LatentState(0, 0, 1.5, 3.0, 2.0), data, cfg)
    assert lp == pytest.approx(latent_log_prior(0, 0, 1.5, 3.0), abs=1e-14)


@pytest.mark.parametrize("family", ["poisson", "negbin"])
def test_log_posterior_compositional(family):
    data = SurveyDataset.from_arrays([[5]], [0.3])
    phi_prior = GammaPrior(0.5, 0.1) if family == "negbin" else None
    cfg = ModelConfig(family, GammaPrior(2.0, 0.5), GammaPrior(3.0, 1.0), UniformPrior(1.0, 10.0),
                      phi_prior)
    phi = 1.7 if family == "negbin" else None
    s = LatentState(3, 7, 2.5, 2.2, 4.0, phi)
    expect = (observation_log_lik(data, 7, 4.0, phi, family) + latent_log_prior(3, 7, 2.5, 2.2)
              + stats.gamma.logpdf(2.5, 2.0, scale=2.0) + stats.gamma.logpdf(2.2, 3.0)
              + stats.uniform.logpdf(4.0, 1.0, 9.0))
    if phi is not None:
        expect += stats.gamma.logpdf(phi, 0.5, scale=10.0)
    assert log_posterior(s, data, cfg) == pytest.approx(expect, abs=1e-10)


@given(G=st.integers(1, 40), T=st.integers(1, 400), lg=st.floats(0.1, 50), ln=st.floats(0.1, 50),
       alpha=st.floats(1.01, 99.0), phi=st.floats(0.01, 100.0))
@settings(max_examples=80)
def test_log_posterior_finite_in_interior(G, T, lg, ln, alpha, phi):
    data = SurveyDataset.from_arrays([[3, 0], [12, 7]], [0.01, 0.2])
    cfg = ModelConfig(Family.NEGBIN, GammaPrior(0.01, 0.01), GammaPrior(3, 1), UniformPrior(1, 100),
                      GammaPrior(0.01, 0.01))
    assert math.isfinite(log_posterior(LatentState(G, T, lg, ln, alpha, phi), data, cfg))


def test_state_config_mismatch():
    data = SurveyDataset.from_arrays([[3]], [0.1])
    cfg = ModelConfig(Family.POISSON, GammaPrior(1, 1), GammaPrior(1, 1), GammaPrior(1, 1))
    with pytest.raises(ConfigurationError):
        log_posterior(LatentState(1, 2, 1.0, 1.0, 1.0, phi=2.0), data, cfg)
    pinned = ModelConfig(Family.POISSON, FixedValue(2.0), GammaPrior(1, 1), GammaPrior(1, 1))
    with pytest.raises(ConfigurationError):
        log_posterior(LatentState(1, 2, 1.0, 1.0, 1.0), data, pinned)


def test_fixed_prior_contributes_zero():
    assert log_prior(FixedValue(3.0), 3.0) == 0.0
    assert log_prior(UniformPrior(0, 4), 2.0) == pytest.approx(-math.log(4))
    assert log_prior(UniformPrior(0, 4), 5.0) == -math.inf


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

def test_config_requires_phi_prior_iff_negbin():
    g = GammaPrior(1, 1)
    with pytest.raises(ConfigurationError):
        ModelConfig(Family.NEGBIN, g, g, g)
    with pytest.raises(ConfigurationError):
        ModelConfig(Family.POISSON, g, g, g, g)


def test_fixed_zero_alpha_rejected():
    g = GammaPrior(1, 1)
    with pytest.raises(ConfigurationError):
        ModelConfig(Family.POISSON, g, g, FixedValue(0.0))


@pytest.mark.parametrize("args", [(0, 1), (1, 0), (-1, 1)])
def test_gamma_prior_validation(args):
    with pytest.raises(ConfigurationError):
        GammaPrior(*args)


def test_gamma_scale_form():
    p = GammaPrior.from_scale(1.0, 72.0)
    assert p.mean == pytest.approx(72.0)
    assert p.rate == pytest.approx(1 / 72)


@pytest.mark.parametrize("cov", [0.0, 1.0, 1.2, -0.1, math.nan])
def test_dataset_coverage_bounds(cov):
    with pytest.raises(DataError):
        SurveyDataset((SiteRecord("a", cov, (1,)),))


def test_dataset_rejects_ragged_and_negative():
    with pytest.raises(DataError):
        SurveyDataset((SiteRecord("a", 0.1, (1, 2)), SiteRecord("b", 0.1, (1,))))
    with pytest.raises(DataError):
        SurveyDataset((SiteRecord("a", 0.1, (-1,)),))
    with pytest.raises(DataError):
        SurveyDataset((SiteRecord("a", 0.1, ()),))


def test_latent_state_invariants():
    with pytest.raises(DomainError):
        LatentState(0, 3, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        LatentState(1, 3, 1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# vestige accumulation
# ---------------------------------------------------------------------------

def test_steady_state_closed_forms():
    assert steady_state_alpha(DecayParams(1.0, 50.0)) == pytest.approx(1.0, abs=1e-9)
    assert steady_state_alpha(DecayParams(1.0, math.log(2))) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("beta,delta", [(15.0, 0.1), (1.0, 0.01), (8.0, 1.0), (2.0, 3.0)])
def test_steady_state_is_partial_sum_limit(beta, delta):
    partial = beta * math.fsum(math.exp(-j * delta) for j in range(10 ** 4 + 1))
    assert steady_state_alpha(DecayParams(beta, delta)) == pytest.approx(partial, rel=1e-6)


def test_steady_state_value():
    expect = 15 * math.exp(0.1) / (math.exp(0.1) - 1)
    assert steady_state_alpha(DecayParams(15.0, 0.1)) == pytest.approx(expect, rel=1e-12)
    assert 157.62 < expect < 157.63


@pytest.mark.parametrize("delta", [0.0, -1.0, math.inf])
def test_decay_validation(delta):
    with pytest.raises(DomainError):
        DecayParams(1.0, delta)


def test_accumulate_zero_abundance(rng):
    assert not accumulate_vestiges(DecayParams(3.0, 0.2), 0, 20, rng).any()


def test_accumulate_first_step_mean(rng):
    v = accumulate_vestiges(DecayParams(2.0, 0.3), 25, 5, rng, n_replicates=20000)
    # V_1 ~ Poisson(beta T) = Poisson(50); standard error 0.05
    assert v[:, 0].mean() == pytest.approx(50.0, abs=0.25)


def test_accumulate_conditional_means(rng):
    decay = DecayParams(1.5, 0.4)
    v = accumulate_vestiges(decay, 10, 4, rng, n_replicates=40000)
    expect = [1.5 * 10 * sum(math.exp(-0.4 * j) for j in range(t)) for t in range(1, 5)]
    np.testing.assert_allclose(v.mean(axis=0), expect, rtol=0.01)


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------

def test_group_sum_matches_compound_poisson():
    rng = np.random.default_rng(7)
    n, lam_G, lam_N = 100_000, 3.0, 4.0
    G1 = rng.poisson(lam_G, n)
    direct = np.array([rng.poisson(lam_N, g).sum() for g in G1])
    G2 = rng.poisson(lam_G, n)
    hier = rng.poisson(G2 * lam_N)
    edges = list(range(0, 31)) + [10 ** 6]
    a, _ = np.histogram(direct, edges)
    b, _ = np.histogram(hier, edges)
    keep = (a + b) > 0
    _, p, _, _ = stats.chi2_contingency(np.vstack([a[keep], b[keep]]))
    assert p > 0.001
