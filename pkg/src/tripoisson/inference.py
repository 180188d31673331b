"""Metropolis-within-Gibbs posterior sampling for the triple Poisson model.

Conjugate Gamma draws are used for lambda_G, lambda_N and (Poisson family)
alpha; under a Uniform prior the same Gamma is truncated by rejection, with
a log-scale Metropolis step when the truncation window is too improbable.
Everything else is a random-walk Metropolis step.  Two
extra joint moves travel along the ridges alpha*T = const and
G*lambda_N = const, where the single-site updates crawl.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import _kernels as K
from .diagnostics import effective_sample_size, split_rhat
from .errors import CapTooSmallError, ConfigurationError, DomainError, InitializationError
from .model_core import (Family, FixedValue, GammaPrior, LatentState, ModelConfig,
                         SurveyDataset, UniformPrior, prior_arrays)

PARAM_NAMES = ("G", "T", "lambda_G", "lambda_N", "alpha", "phi")


@dataclass
class McmcSettings:
    n_chains: int = 4
    n_iterations: int = 20_000
    burn_in: int = 5_000
    thin: int = 1
    seed: Optional[int] = None
    rw_scale_G: float = 1.0
    rw_scale_T: float = 2.0
    rw_scale_logalpha: float = 0.3
    rw_scale_logphi: float = 0.5
    rw_scale_loglambda: float = 0.3
    rw_scale_ridge: float = 0.3
    ridge_moves: bool = True
    adapt: bool = True
    adapt_window: int = 50

    def __post_init__(self):
        if self.n_chains < 1:
            raise ConfigurationError("n_chains must be >= 1")
        if self.n_iterations < 1 or not 0 <= self.burn_in < self.n_iterations:
            raise ConfigurationError("need 0 <= burn_in < n_iterations")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")
        if self.adapt_window < 1:
            raise ConfigurationError("adapt_window must be >= 1")
        for name in ("rw_scale_G", "rw_scale_T", "rw_scale_logalpha", "rw_scale_logphi",
                     "rw_scale_loglambda", "rw_scale_ridge"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.seed is not None and not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    def kernel_scales(self) -> np.ndarray:
        s = np.empty(K.N_KERNELS)
        s[K.K_LAMBDA_G] = s[K.K_LAMBDA_N] = self.rw_scale_loglambda
        s[K.K_ALPHA] = self.rw_scale_logalpha
        s[K.K_G] = self.rw_scale_G
        s[K.K_T] = self.rw_scale_T
        s[K.K_PHI] = self.rw_scale_logphi
        s[K.K_RIDGE_TA] = s[K.K_RIDGE_GN] = self.rw_scale_ridge
        return s


@dataclass
class ParamSummary:
    mean: float
    sd: float
    q2_5: float
    median: float
    q97_5: float
    ess: float
    rhat: Optional[float] = None


@dataclass
class FitResult:
    summaries: Dict[str, ParamSummary]
    chains: Dict[str, np.ndarray]
    dic: float
    dbar: float
    p_d: float
    acceptance_rates: Dict[str, float]
    family: str
    seed: int
    settings: McmcSettings

    @property
    def n_chains(self) -> int:
        return next(iter(self.chains.values())).shape[0]

    @property
    def n_draws(self) -> int:
        return next(iter(self.chains.values())).shape[1]

    def to_dict(self, include_chains: bool = False) -> dict:
        out = {
            "family": self.family,
            "seed": int(self.seed),
            "n_chains": self.n_chains,
            "n_draws_per_chain": self.n_draws,
            "settings": asdict(self.settings),
            "summaries": {k: asdict(v) for k, v in self.summaries.items()},
            "dic": self.dic,
            "dbar": self.dbar,
            "p_d": self.p_d,
            "acceptance_rates": dict(self.acceptance_rates),
        }
        out["settings"]["seed"] = int(self.seed)
        if include_chains:
            out["chains"] = {k: v.tolist() for k, v in self.chains.items()}
        return out


# ---------------------------------------------------------------------------
# single kernels (validated wrappers around the compiled steps)
# ---------------------------------------------------------------------------

def _arrays(state: LatentState, config: ModelConfig, data: Optional[SurveyDataset] = None):
    st = state.to_array()
    pk, pa, pb = config.kernel_arrays()
    if data is None:
        dummy = np.zeros(1)
        return st, pk, pa, pb, (dummy, np.ones(1), dummy, np.zeros(4))
    y, nu, lfact, pstats = data.kernel_arrays
    K.refresh_cache(st, y, nu, lfact, pstats, config.family.code)
    return st, pk, pa, pb, data.kernel_arrays


def gibbs_update_lambda_G(state: LatentState, config: ModelConfig, rng: np.random.Generator,
                          scale: float = 0.3) -> float:
    """Draw lambda_G from Gamma(a + G, b + 1), or Gamma(G + 1, 1) truncated to a Uniform prior."""
    st, pk, pa, pb, _ = _arrays(state, config)
    K.k_lambda_G(rng, st, pk, pa, pb, scale)
    return float(st[K.S_LG])


def gibbs_update_lambda_N(state: LatentState, config: ModelConfig, rng: np.random.Generator,
                          scale: float = 0.3) -> float:
    """Draw lambda_N from Gamma(a + T, b + G) (the prior when G = 0)."""
    st, pk, pa, pb, _ = _arrays(state, config)
    K.k_lambda_N(rng, st, pk, pa, pb, scale)
    return float(st[K.S_LN])


def gibbs_update_alpha(state: LatentState, data: SurveyDataset, config: ModelConfig,
                       rng: np.random.Generator, scale: float = 0.3) -> float:
    """Conjugate (possibly truncated) Gamma draw for the Poisson family, log-scale MH otherwise."""
    st, pk, pa, pb, (y, nu, lfact, pstats) = _arrays(state, config, data)
    K.k_alpha(rng, st, y, nu, lfact, pstats, config.family.code, pk, pa, pb, scale)
    return float(st[K.S_ALPHA])


def mh_update_G(state: LatentState, config: ModelConfig, rng: np.random.Generator,
                scale: float = 1.0) -> int:
    st, *_ = _arrays(state, config)
    K.k_G(rng, st, scale)
    return int(st[K.S_G])


def mh_update_T(state: LatentState, data: SurveyDataset, config: ModelConfig,
                rng: np.random.Generator, scale: float = 2.0) -> int:
    st, pk, pa, pb, (y, nu, lfact, pstats) = _arrays(state, config, data)
    K.k_T(rng, st, y, nu, lfact, pstats, config.family.code, scale)
    return int(st[K.S_T])


def mh_update_phi(state: LatentState, data: SurveyDataset, config: ModelConfig,
                  rng: np.random.Generator, scale: float = 0.5) -> float:
    if config.family is not Family.NEGBIN:
        raise ConfigurationError("phi is only defined for the negative binomial family")
    if state.phi is None:
        raise ConfigurationError("state has no phi")
    st, pk, pa, pb, (y, nu, lfact, pstats) = _arrays(state, config, data)
    K.k_phi(rng, st, y, nu, lfact, pstats, config.family.code, pk, pa, pb, scale)
    return float(st[K.S_PHI])


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def _prior_start(prior, default=1.0) -> float:
    if prior is None:
        return default
    if isinstance(prior, (GammaPrior, UniformPrior, FixedValue)):
        return float(prior.mean)
    return default


def _in_support(prior, x) -> bool:
    if prior is None:
        return True
    return K.log_prior_density(*prior_arrays(prior), x) > -np.inf


def _clip_to_support(prior, x):
    if isinstance(prior, UniformPrior):
        pad = 1e-6 * (prior.upper - prior.lower)
        return min(max(x, prior.lower + pad), prior.upper - pad)
    return x


def _draw_prior(prior, rng, fallback):
    if isinstance(prior, FixedValue):
        return prior.value
    if isinstance(prior, UniformPrior):
        return rng.uniform(max(prior.lower, 1e-12), prior.upper)
    if isinstance(prior, GammaPrior):
        # Gamma(0.01, 0.01) draws are often ~1e-100; keep them usable
        return float(np.clip(rng.gamma(prior.shape, 1.0 / prior.rate), 1e-3, 1e6))
    return fallback


def initial_state(data: SurveyDataset, config: ModelConfig,
                  rng: Optional[np.random.Generator] = None) -> LatentState:
    """Deterministic starting point, optionally jittered with ``rng``.

    G starts at the prior mean of lambda_G rounded up (at least 1),
    T = round(G * mean lambda_N), and a free alpha is moment-matched to the
    counts.  When alpha is fixed the counts pin T instead: T is set to
    sum(y) / (alpha * sum(nu)) and G, lambda_N are chosen to agree with it.
    phi starts at 1.
    """
    y, nu, lfact, pstats = data.kernel_arrays
    has_counts = pstats[0] > 0
    lam_G = _prior_start(config.prior_lambda_G)
    lam_N = _prior_start(config.prior_lambda_N)
    G = max(1, math.ceil(lam_G))
    T = int(round(G * lam_N))
    if has_counts:
        T = max(T, 1)
    phi = None
    if config.family is Family.NEGBIN:
        phi = 1.0
        if isinstance(config.prior_phi, FixedValue):
            phi = config.prior_phi.value
        elif not _in_support(config.prior_phi, phi):
            phi = _prior_start(config.prior_phi)

    def alpha_for(T_):
        if isinstance(config.prior_alpha, FixedValue):
            return config.prior_alpha.value
        a = _prior_start(config.prior_alpha)
        if has_counts and T_ > 0:
            a = pstats[0] / (T_ * pstats[2])
            a = _clip_to_support(config.prior_alpha, a)
        return a

    if has_counts and isinstance(config.prior_alpha, FixedValue):
        T = max(1, int(round(pstats[0] / (config.prior_alpha.value * pstats[2]))))
        G = max(1, int(round(T / lam_N)))
        if not isinstance(config.prior_lambda_N, FixedValue):
            lam_N = _clip_to_support(config.prior_lambda_N, T / G)
    alpha = alpha_for(T)
    if rng is not None:
        G = max(1, int(round(G * math.exp(0.3 * rng.standard_normal()))))
        T = int(round(T * math.exp(0.3 * rng.standard_normal())))
        if has_counts:
            T = max(T, 1)
        if not isinstance(config.prior_lambda_G, FixedValue):
            lam_G *= math.exp(0.2 * rng.standard_normal())
        if not isinstance(config.prior_lambda_N, FixedValue):
            lam_N *= math.exp(0.2 * rng.standard_normal())
        alpha = alpha_for(T)
    state = LatentState(G, T, lam_G, lam_N, alpha, phi)
    return state


def _finite_start(data, config, rng, pk, pa, pb, arrays):
    y, nu, lfact, pstats = arrays
    fam = config.family.code
    state = initial_state(data, config, rng)
    if K.log_posterior_arrays(state.to_array(), y, nu, lfact, pstats, fam, pk, pa, pb) > -np.inf:
        return state
    state = initial_state(data, config)
    if K.log_posterior_arrays(state.to_array(), y, nu, lfact, pstats, fam, pk, pa, pb) > -np.inf:
        return state
    for _ in range(100):
        lam_G = _draw_prior(config.prior_lambda_G, rng, 1.0)
        lam_N = _draw_prior(config.prior_lambda_N, rng, 1.0)
        G = 1 + int(rng.poisson(lam_G))
        T = max(1, int(rng.poisson(G * lam_N)))
        alpha = _draw_prior(config.prior_alpha, rng, 1.0)
        phi = None
        if config.family is Family.NEGBIN:
            phi = _draw_prior(config.prior_phi, rng, 1.0)
        try:
            state = LatentState(G, T, lam_G, lam_N, alpha, phi)
        except DomainError:
            continue
        if K.log_posterior_arrays(state.to_array(), y, nu, lfact, pstats, fam, pk, pa, pb) > -np.inf:
            return state
    raise InitializationError("log-posterior is -inf at every starting point tried (100 re-draws)")


# ---------------------------------------------------------------------------
# the sampler
# ---------------------------------------------------------------------------

def _enabled_mask(config: ModelConfig, settings: McmcSettings) -> np.ndarray:
    enabled = np.ones(K.N_KERNELS, dtype=np.int64)
    enabled[K.K_PHI] = int(config.family is Family.NEGBIN)
    enabled[K.K_RIDGE_TA] = int(settings.ridge_moves)
    enabled[K.K_RIDGE_GN] = int(settings.ridge_moves)
    return enabled


def run_chain(data: SurveyDataset, config: ModelConfig, settings: McmcSettings,
              seed_seq: np.random.SeedSequence, enabled: Optional[np.ndarray] = None,
              start: Optional[LatentState] = None):
    """Run one chain; returns (draws[n_keep, 6], accepted[8], tried[8], final scales)."""
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    pk, pa, pb = config.kernel_arrays()
    arrays = data.kernel_arrays
    if start is None:
        start = _finite_start(data, config, rng, pk, pa, pb, arrays)
    st = start.to_array()
    scales = settings.kernel_scales()
    if enabled is None:
        enabled = _enabled_mask(config, settings)
    y, nu, lfact, pstats = arrays
    draws, acc, tried = K.run_chain(rng, st, y, nu, lfact, pstats, config.family.code,
                                    pk, pa, pb, scales, enabled, settings.n_iterations,
                                    settings.burn_in, settings.thin, settings.adapt,
                                    settings.adapt_window)
    return draws, acc, tried, scales


def summarize(chains: np.ndarray) -> ParamSummary:
    """Pooled summary of an (n_chains, n_draws) array."""
    x = np.asarray(chains, dtype=float)
    flat = x.ravel()
    q = np.quantile(flat, [0.025, 0.5, 0.975])
    sd = float(flat.std(ddof=1)) if flat.size > 1 else 0.0
    rhat = split_rhat(x) if x.shape[0] >= 2 else None
    return ParamSummary(float(flat.mean()), sd, float(q[0]), float(q[1]), float(q[2]),
                        effective_sample_size(x), rhat)


def run_mcmc(data: SurveyDataset, config: ModelConfig, settings: Optional[McmcSettings] = None,
             chain_seeds: Optional[Sequence[int]] = None, with_dic: bool = True) -> FitResult:
    """Sample the posterior with ``settings.n_chains`` independent chains.

    Chain ``k`` draws from its own stream, spawned from ``settings.seed``
    (or taken from ``chain_seeds[k]``), so results are reproducible and
    chains are exchangeable.  ``with_dic=False`` skips the deviance pass and
    leaves the DIC fields as NaN.
    """
    settings = settings or McmcSettings()
    seed = settings.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2 ** 64)
    if chain_seeds is not None:
        if len(chain_seeds) != settings.n_chains:
            raise ConfigurationError("need one chain seed per chain")
        seqs = [np.random.SeedSequence(int(s)) for s in chain_seeds]
    else:
        seqs = np.random.SeedSequence(int(seed)).spawn(settings.n_chains)

    all_draws, acc, tried = [], np.zeros(K.N_KERNELS), np.zeros(K.N_KERNELS)
    for ss in seqs:
        d, a, t, _ = run_chain(data, config, settings, ss)
        all_draws.append(d)
        acc += a
        tried += t
    draws = np.stack(all_draws)  # (chains, n_keep, 6)

    names = list(PARAM_NAMES) if config.family is Family.NEGBIN else list(PARAM_NAMES[:5])
    chains = {}
    for j, name in enumerate(names):
        arr = draws[:, :, j]
        chains[name] = arr.astype(np.int64) if name in ("G", "T") else arr.copy()
    summaries = {name: summarize(arr) for name, arr in chains.items()}
    dbar = p_d = dic = float("nan")
    if with_dic:
        dbar, p_d, dic = compute_dic(chains, data, config)

    rates = {}
    for k, name in enumerate(K.KERNEL_NAMES):
        if tried[k] > 0:
            rates[name] = float(acc[k] / tried[k])
    return FitResult(summaries, chains, dic, dbar, p_d, rates, config.family.value, int(seed), settings)


# ---------------------------------------------------------------------------
# DIC
# ---------------------------------------------------------------------------

def compute_dic(chains: Dict[str, np.ndarray], data: SurveyDataset, config: ModelConfig):
    """Return (Dbar, p_D, DIC) with deviance -2 * observation log-likelihood.

    The plug-in point is the posterior mean of every parameter with T rounded
    to the nearest integer.
    """
    T = np.asarray(chains["T"], dtype=float).ravel()
    if T.size == 0:
        raise DomainError("no draws to compute DIC from")
    alpha = np.asarray(chains["alpha"], dtype=float).ravel()
    if config.family is Family.NEGBIN:
        phi = np.asarray(chains["phi"], dtype=float).ravel()
    else:
        phi = np.ones_like(alpha)
    y, nu, lfact, pstats = data.kernel_arrays
    fam = config.family.code
    dev = K.deviance_draws(T, alpha, phi, y, nu, lfact, pstats, fam)
    dbar = float(dev.mean())
    d_hat = -2.0 * K.obs_loglik(y, nu, lfact, pstats, float(np.round(T.mean())),
                                float(alpha.mean()), float(phi.mean()), fam)
    p_d = dbar - float(d_hat)
    return dbar, p_d, dbar + p_d


# ---------------------------------------------------------------------------
# exact enumeration oracle
# ---------------------------------------------------------------------------

@dataclass
class PosteriorTable:
    """Normalised p(G, T | data) on the grid 0..G_max x 0..T_max."""

    probs: np.ndarray
    tail_bound: float

    @property
    def marginal_T(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    @property
    def marginal_G(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    @property
    def mean_T(self) -> float:
        return float(np.dot(np.arange(self.probs.shape[1]), self.marginal_T))

    @property
    def mean_G(self) -> float:
        return float(np.dot(np.arange(self.probs.shape[0]), self.marginal_G))

    @property
    def mode(self):
        g, t = np.unravel_index(np.argmax(self.probs), self.probs.shape)
        return int(g), int(t)


def _pinned_values(config: ModelConfig, fixed_continuous: Optional[dict]):
    fixed_continuous = dict(fixed_continuous or {})
    vals = {}
    for name, prior in config.priors.items():
        if name in fixed_continuous:
            vals[name] = float(fixed_continuous.pop(name))
        elif isinstance(prior, FixedValue):
            vals[name] = prior.value
        else:
            raise ConfigurationError(f"{name} must be pinned (FixedValue prior or fixed_continuous) to enumerate")
    if fixed_continuous:
        raise ConfigurationError(f"unknown parameters in fixed_continuous: {sorted(fixed_continuous)}")
    return vals


def enumerate_posterior(data: SurveyDataset, config: ModelConfig, G_max: int = 15, T_max: int = 120,
                        fixed_continuous: Optional[dict] = None, tol: float = 1e-10) -> PosteriorTable:
    """Exact joint posterior of (G, T) with every continuous parameter pinned.

    Raises CapTooSmallError when the mass outside the grid may exceed ``tol``.
    The bound evaluates the posterior on a larger grid and covers the rest
    with the prior tail times the largest attainable likelihood (the
    likelihood in T is decreasing beyond max(y / (alpha nu))).
    """
    if G_max < 0 or T_max < 0:
        raise DomainError("caps must be nonnegative")
    vals = _pinned_values(config, fixed_continuous)
    lam_G, lam_N, alpha = vals["lambda_G"], vals["lambda_N"], vals["alpha"]
    phi = vals.get("phi", 1.0)
    st0 = np.array([0.0, 0.0, lam_G, lam_N, alpha, phi])
    pk, pa, pb = config.kernel_arrays()
    y, nu, lfact, pstats = data.kernel_arrays
    fam = config.family.code

    positive = y > 0
    t_star = float(np.max(y[positive] / (alpha * nu[positive]))) if positive.any() else 0.0

    G_ext, T_ext = max(2 * G_max, G_max + 20), max(2 * T_max, T_max + 50, int(math.ceil(t_star)) + 50)
    for _ in range(8):
        ext = K.grid_log_posterior(G_ext, T_ext, st0, y, nu, lfact, pstats, fam, pk, pa, pb)
        log_z_ext = logsumexp(ext)
        if not np.isfinite(log_z_ext):
            raise CapTooSmallError("posterior has no mass on the enumeration grid")
        T_hi = max(T_ext + 1, int(math.ceil(t_star)) + 1)
        logL = K.obs_loglik_range(T_hi, alpha, phi, y, nu, lfact, pstats, fam)
        sup_all = float(np.max(logL))
        sup_tail = float(np.max(logL[T_ext + 1:]))
        crude = np.logaddexp(stats.poisson.logsf(G_ext, lam_G) + sup_all,
                             stats.poisson.logsf(T_ext, G_ext * lam_N) + sup_tail)
        if crude - log_z_ext < math.log(tol) - 10:
            break
        G_ext, T_ext = 2 * G_ext, 2 * T_ext

    outside = ext.copy()
    outside[:G_max + 1, :T_max + 1] = -np.inf
    log_tail = np.logaddexp(logsumexp(outside), crude) - log_z_ext
    tail = float(math.exp(log_tail))
    if tail >= tol:
        raise CapTooSmallError(
            f"mass outside G <= {G_max}, T <= {T_max} may reach {tail:.3g} (tolerance {tol:g}); raise the caps")
    grid = ext[:G_max + 1, :T_max + 1]
    probs = np.exp(grid - logsumexp(grid))
    return PosteriorTable(probs, tail)


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size))
    q = np.pad(q, (0, n - q.size))
    return 0.5 * float(np.abs(p - q).sum())


def empirical_pmf(draws, size: Optional[int] = None) -> np.ndarray:
    counts = np.bincount(np.asarray(draws, dtype=np.int64).ravel(), minlength=size or 0)
    return counts / counts.sum()
