"""Densities, data types and the joint log-posterior of the triple Poisson model.

The hierarchy is::

    Y[s, t] | T      ~ Poisson(alpha * T * nu[s])   (or NegBin(mean, phi))
    T | G            ~ Poisson(G * lambda_N)
    G                ~ Poisson(lambda_G)

with ``alpha`` the steady-state number of vestiges available per animal.
All density math is carried out in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, DataError, DomainError


class Family(str, Enum):
    POISSON = "poisson"
    NEGBIN = "negbin"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"poisson": cls.POISSON, "negbin": cls.NEGBIN,
                   "negativebinomial": cls.NEGBIN, "nb": cls.NEGBIN}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown observation family {value!r}") from None

    @property
    def code(self) -> int:
        return K.POISSON if self is Family.POISSON else K.NEGBIN


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SiteRecord:
    site_id: str
    coverage: float
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(self.counts))


@dataclass(frozen=True)
class SurveyDataset:
    """Replicated vestige counts with the coverage fraction of each site."""

    sites: tuple

    def __post_init__(self):
        sites = tuple(self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise DataError("dataset has no sites")
        n_rep = len(sites[0].counts)
        seen = set()
        for rec in sites:
            if rec.site_id in seen:
                raise DataError(f"duplicate site_id {rec.site_id!r}")
            seen.add(rec.site_id)
            cov = rec.coverage
            if not (isinstance(cov, (int, float, np.floating)) and math.isfinite(cov) and 0.0 < cov < 1.0):
                raise DataError(f"site {rec.site_id!r}: coverage must lie strictly in (0, 1), got {cov!r}")
            if len(rec.counts) != n_rep:
                raise DataError(
                    f"site {rec.site_id!r} has {len(rec.counts)} replicates, expected {n_rep} (ragged data)")
            for c in rec.counts:
                if isinstance(c, (bool, np.bool_)) or not float(c).is_integer() or c < 0:
                    raise DataError(f"site {rec.site_id!r}: counts must be nonnegative integers, got {c!r}")
        if n_rep == 0:
            raise DataError("dataset has no counts")

    @classmethod
    def from_arrays(cls, counts, coverage, site_ids: Optional[Sequence[str]] = None) -> "SurveyDataset":
        """Build from a (sites, replicates) count array and per-site coverage."""
        counts = np.asarray(counts)
        if counts.ndim == 1:
            counts = counts[:, None]
        coverage = np.atleast_1d(np.asarray(coverage, dtype=float))
        if coverage.shape[0] != counts.shape[0]:
            raise DataError("coverage length must match number of sites")
        if site_ids is None:
            site_ids = [f"s{i + 1}" for i in range(counts.shape[0])]
        return cls(tuple(
            SiteRecord(str(sid), float(cov), tuple(int(c) for c in row))
            for sid, cov, row in zip(site_ids, coverage, counts)))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_replicates(self) -> int:
        return len(self.sites[0].counts)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([rec.counts for rec in self.sites], dtype=np.int64)

    @cached_property
    def coverage(self) -> np.ndarray:
        return np.array([rec.coverage for rec in self.sites], dtype=float)

    @cached_property
    def kernel_arrays(self):
        """Flattened (y, nu, log y!, summary stats) in the layout the kernels use."""
        y = self.counts.astype(float).ravel()
        nu = np.repeat(self.coverage, self.n_replicates)
        lfact = np.array([math.lgamma(v + 1.0) for v in y])
        pstats = np.array([y.sum(), float(np.sum(y * np.log(nu))), nu.sum(), lfact.sum()])
        return y, nu, lfact, pstats


# ---------------------------------------------------------------------------
# priors and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior in shape-rate form (density proportional to x^(a-1) e^(-b x))."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0 and math.isfinite(self.shape) and math.isfinite(self.rate)):
            raise ConfigurationError(f"Gamma prior needs shape > 0 and rate > 0, got ({self.shape}, {self.rate})")

    @classmethod
    def from_scale(cls, shape: float, scale: float) -> "GammaPrior":
        if not scale > 0:
            raise ConfigurationError(f"Gamma scale must be positive, got {scale}")
        return cls(shape, 1.0 / scale)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def scale(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class UniformPrior:
    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower >= 0 and self.upper > self.lower and math.isfinite(self.upper)):
            raise ConfigurationError(f"Uniform prior needs 0 <= lower < upper, got ({self.lower}, {self.upper})")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class FixedValue:
    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ConfigurationError(f"fixed value must be finite and >= 0, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value


PriorSpec = Union[GammaPrior, UniformPrior, FixedValue]


def prior_arrays(prior: PriorSpec):
    if isinstance(prior, GammaPrior):
        return K.GAMMA, prior.shape, prior.rate
    if isinstance(prior, UniformPrior):
        return K.UNIFORM, prior.lower, prior.upper
    if isinstance(prior, FixedValue):
        return K.FIXED, prior.value, 0.0
    raise ConfigurationError(f"not a prior specification: {prior!r}")


def log_prior(prior: PriorSpec, x: float) -> float:
    """Log density of a hyperparameter prior; FixedValue contributes 0."""
    kind, a, b = prior_arrays(prior)
    return float(K.log_prior_density(kind, a, b, float(x)))


@dataclass(frozen=True)
class ModelConfig:
    family: Family
    prior_lambda_G: PriorSpec
    prior_lambda_N: PriorSpec
    prior_alpha: PriorSpec
    prior_phi: Optional[PriorSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.family is Family.NEGBIN and self.prior_phi is None:
            raise ConfigurationError("negative binomial family needs a prior for phi")
        if self.family is Family.POISSON and self.prior_phi is not None:
            raise ConfigurationError("prior for phi given but family is poisson")
        for name in ("prior_lambda_G", "prior_lambda_N", "prior_alpha", "prior_phi"):
            p = getattr(self, name)
            if p is None:
                continue
            prior_arrays(p)
            if isinstance(p, FixedValue) and p.value == 0:
                raise ConfigurationError(f"{name}: a fixed value of 0 gives a degenerate likelihood")

    def with_family(self, family, prior_phi: Optional[PriorSpec] = None) -> "ModelConfig":
        family = Family.parse(family)
        if family is Family.NEGBIN:
            phi = prior_phi or self.prior_phi or GammaPrior(0.01, 0.01)
        else:
            phi = None
        return ModelConfig(family, self.prior_lambda_G, self.prior_lambda_N, self.prior_alpha, phi)

    @property
    def priors(self) -> dict:
        out = {"lambda_G": self.prior_lambda_G, "lambda_N": self.prior_lambda_N, "alpha": self.prior_alpha}
        if self.prior_phi is not None:
            out["phi"] = self.prior_phi
        return out

    def kernel_arrays(self):
        phi = self.prior_phi if self.prior_phi is not None else FixedValue(1.0)
        rows = [prior_arrays(p) for p in (self.prior_lambda_G, self.prior_lambda_N, self.prior_alpha, phi)]
        pk = np.array([r[0] for r in rows], dtype=np.int64)
        pa = np.array([r[1] for r in rows], dtype=float)
        pb = np.array([r[2] for r in rows], dtype=float)
        return pk, pa, pb


@dataclass
class LatentState:
    G: int
    T: int
    lambda_G: float
    lambda_N: float
    alpha: float
    phi: Optional[float] = None

    def __post_init__(self):
        if self.G < 0 or self.T < 0:
            raise DomainError("G and T must be nonnegative")
        if self.G == 0 and self.T != 0:
            raise DomainError("T must be 0 when G is 0")
        for name in ("lambda_G", "lambda_N", "alpha"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.phi is not None and not self.phi > 0:
            raise DomainError("phi must be positive")

    def to_array(self) -> np.ndarray:
        """Kernel layout; the two trailing cache slots are filled by the sampler."""
        return np.array([self.G, self.T, self.lambda_G, self.lambda_N, self.alpha,
                         1.0 if self.phi is None else self.phi, 0.0, 0.0], dtype=float)

    @classmethod
    def from_array(cls, arr, has_phi: bool) -> "LatentState":
        return cls(int(arr[0]), int(arr[1]), float(arr[2]), float(arr[3]), float(arr[4]),
                   float(arr[5]) if has_phi else None)


@dataclass(frozen=True)
class DecayParams:
    """Fresh vestiges per animal per day and their exponential decay rate."""

    beta: float
    delta_p: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be positive and finite, got {self.beta}")
        if not (self.delta_p > 0 and math.isfinite(self.delta_p)):
            raise DomainError(f"delta_p must be positive and finite (series diverges otherwise), got {self.delta_p}")


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def _check_count(y):
    if y < 0 or not float(y).is_integer():
        raise DomainError(f"count must be a nonnegative integer, got {y!r}")


def log_pmf_poisson(y: int, mu: float) -> float:
    """Log Poisson pmf, with Poisson(0; 0) = 1."""
    _check_count(y)
    if not math.isfinite(mu) or mu < 0:
        raise DomainError(f"Poisson mean must be finite and >= 0, got {mu}")
    return float(K.log_pmf_poisson(float(y), float(mu)))


def log_pmf_negbin(y: int, mu: float, phi: float) -> float:
    """Log negative binomial pmf with mean ``mu`` and variance ``mu + mu**2 / phi``."""
    _check_count(y)
    if not (math.isfinite(phi) and phi > 0):
        raise DomainError(f"dispersion phi must be finite and positive, got {phi}")
    if not math.isfinite(mu) or mu < 0:
        raise DomainError(f"mean must be finite and >= 0, got {mu}")
    return float(K.log_pmf_negbin(float(y), float(mu), float(phi)))


def observation_log_lik(data: SurveyDataset, T: int, alpha: float, phi: Optional[float],
                        family=Family.POISSON) -> float:
    """Sum of log pmf(y[s, t]; alpha * T * nu[s]) over all sites and replicates."""
    family = Family.parse(family)
    if family is Family.NEGBIN and (phi is None or not phi > 0):
        raise DomainError("negative binomial likelihood needs phi > 0")
    if T < 0 or alpha <= 0:
        raise DomainError("need T >= 0 and alpha > 0")
    y, nu, lfact, pstats = data.kernel_arrays
    return float(K.obs_loglik(y, nu, lfact, pstats, float(T), float(alpha),
                              1.0 if phi is None else float(phi), family.code))


def latent_log_prior(G: int, T: int, lambda_G: float, lambda_N: float) -> float:
    """log Poisson(G; lambda_G) + log Poisson(T; G * lambda_N)."""
    if not (lambda_G > 0 and lambda_N > 0):
        raise DomainError("rates must be positive")
    if G < 0 or T < 0:
        return -math.inf
    return float(K.latent_log_prior(float(G), float(T), float(lambda_G), float(lambda_N)))


def _check_state(state: LatentState, config: ModelConfig):
    if config.family is Family.NEGBIN and state.phi is None:
        raise ConfigurationError("state has no phi but family is negbin")
    if config.family is Family.POISSON and state.phi is not None:
        raise ConfigurationError("state carries phi but family is poisson")
    for name, prior in config.priors.items():
        if isinstance(prior, FixedValue) and getattr(state, name) != prior.value:
            raise ConfigurationError(
                f"{name} = {getattr(state, name)} but the configuration fixes it at {prior.value}")


def log_posterior(state: LatentState, data: SurveyDataset, config: ModelConfig) -> float:
    """Unnormalised joint log-posterior of ``state`` given ``data``."""
    _check_state(state, config)
    pk, pa, pb = config.kernel_arrays()
    y, nu, lfact, pstats = data.kernel_arrays
    return float(K.log_posterior_arrays(state.to_array(), y, nu, lfact, pstats,
                                        config.family.code, pk, pa, pb))


# ---------------------------------------------------------------------------
# vestige accumulation
# ---------------------------------------------------------------------------

def steady_state_alpha(decay: DecayParams) -> float:
    """Limit of beta * sum_j exp(-j delta_p): e^d beta / (e^d - 1)."""
    if not isinstance(decay, DecayParams):
        decay = DecayParams(*decay)
    # beta / (1 - e^-d), written with expm1 for small d
    return decay.beta / -math.expm1(-decay.delta_p)


def accumulation_means(decay: DecayParams, T: int, horizon: int) -> np.ndarray:
    """Conditional Poisson means of V_1..V_horizon."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    t = np.arange(horizon)
    return decay.beta * T * np.cumsum(np.exp(-decay.delta_p * t))


def accumulate_vestiges(decay: DecayParams, T: int, horizon: int, rng: np.random.Generator,
                        n_replicates: Optional[int] = None) -> np.ndarray:
    """Simulate the transient vestige totals V_1..V_horizon.

    V_t is Poisson with mean beta*T + sum_{j<t} beta*T*exp(-delta_p (t - j)).
    With ``n_replicates`` the result has shape (n_replicates, horizon).
    """
    if T < 0:
        raise DomainError("T must be nonnegative")
    means = accumulation_means(decay, T, horizon)
    size = None if n_replicates is None else (n_replicates, horizon)
    return rng.poisson(means, size=size)
