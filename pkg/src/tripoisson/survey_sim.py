"""Synthetic line-transect vestige surveys and the distance-sampling comparator.

Geometry: a rectangular region with transects parallel to its long axis,
spaced ``transect_spacing_m`` apart and starting half a spacing from the
edge.  Vestiges are placed uniformly; one within ``truncation_m`` of its
nearest transect is detected with half-normal probability
exp(-x^2 / (2 sigma^2)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import erf

from .errors import DesignError, DomainError, EstimationError
from .model_core import Family, SurveyDataset

Z975 = 1.959963984540054


@dataclass(frozen=True)
class SurveyDesign:
    region_width_m: float = 2000.0
    region_length_m: float = 5000.0
    transect_spacing_m: float = 1000.0
    truncation_m: float = 10.0
    detection_sigma_m: float = 5.0
    n_vestiges: int = 5000

    def __post_init__(self):
        for name in ("region_width_m", "region_length_m", "transect_spacing_m",
                     "truncation_m", "detection_sigma_m"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DesignError(f"{name} must be positive and finite, got {v}")
        if self.n_vestiges < 0:
            raise DesignError("n_vestiges must be nonnegative")
        if self.truncation_m > self.transect_spacing_m / 2:
            raise DesignError("truncation distance exceeds half the transect spacing (strips overlap)")

    @property
    def area_m2(self) -> float:
        return self.region_width_m * self.region_length_m

    @property
    def area_km2(self) -> float:
        return self.area_m2 / 1e6

    @property
    def long_side(self) -> float:
        return max(self.region_width_m, self.region_length_m)

    @property
    def short_side(self) -> float:
        return min(self.region_width_m, self.region_length_m)

    def transect_positions(self) -> np.ndarray:
        """Offsets of the transects across the short side of the region."""
        pos = np.arange(self.transect_spacing_m / 2, self.short_side, self.transect_spacing_m)
        # a strip must fit inside the region
        pos = pos[pos + self.truncation_m <= self.short_side]
        if pos.size == 0:
            raise DesignError("no transect fits inside the region")
        return pos

    def coverage(self) -> np.ndarray:
        n = self.transect_positions().size
        return np.full(n, 2.0 * self.truncation_m * self.long_side / self.area_m2)


@dataclass
class DistanceData:
    distances: List[np.ndarray]
    transect_lengths_m: np.ndarray
    truncation_m: float

    def __post_init__(self):
        self.distances = [np.asarray(d, dtype=float) for d in self.distances]
        self.transect_lengths_m = np.asarray(self.transect_lengths_m, dtype=float)
        if len(self.distances) != self.transect_lengths_m.size:
            raise DomainError("one distance list per transect is required")
        for d in self.distances:
            if d.size and (d.min() < 0 or d.max() > self.truncation_m):
                raise DomainError("distances must lie in [0, truncation]")

    @property
    def counts(self) -> np.ndarray:
        return np.array([d.size for d in self.distances], dtype=np.int64)

    @property
    def all_distances(self) -> np.ndarray:
        if not self.distances:
            return np.empty(0)
        return np.concatenate(self.distances)


@dataclass
class DsEstimate:
    sigma_hat: float
    esw_hat: float
    vestige_density: float
    animal_density: float
    abundance: float
    ci_lower: float
    ci_upper: float
    cv: float = float("nan")
    sigma_at_bound: bool = False


@dataclass
class HalfNormalFit:
    sigma: float
    at_bracket_edge: bool
    loglik: float
    se: float = float("nan")

    def __float__(self):
        return self.sigma


def simulate_survey(design: SurveyDesign, rng: np.random.Generator):
    """Simulate one survey; returns (DistanceData, detected counts, coverage per transect)."""
    pos = design.transect_positions()
    nu = design.coverage()
    lengths = np.full(pos.size, design.long_side)
    n = design.n_vestiges
    across = rng.uniform(0.0, design.short_side, size=n)
    gap = np.abs(across[:, None] - pos[None, :])
    nearest = np.argmin(gap, axis=1) if n else np.empty(0, dtype=int)
    x = gap[np.arange(n), nearest] if n else np.empty(0)
    in_strip = x <= design.truncation_m
    p = np.exp(-x ** 2 / (2.0 * design.detection_sigma_m ** 2))
    detected = in_strip & (rng.random(n) < p)
    dist = [x[detected & (nearest == k)] for k in range(pos.size)]
    data = DistanceData(dist, lengths, design.truncation_m)
    return data, data.counts, nu


# ---------------------------------------------------------------------------
# detection function
# ---------------------------------------------------------------------------

def _simpson(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + _simpson(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1))


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 50) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson(f, a, fa, b, fb, m, fm, whole, tol, max_depth)


def effective_strip_half_width(sigma: float, w: float) -> float:
    """Integral of exp(-x^2 / (2 sigma^2)) over [0, w], by adaptive Simpson."""
    if not (sigma > 0 and w > 0):
        raise DomainError("sigma and w must be positive")
    s2 = 2.0 * sigma * sigma
    return adaptive_simpson(lambda x: math.exp(-x * x / s2), 0.0, w, 1e-10)


def _esw_closed(sigma, w):
    return sigma * math.sqrt(math.pi / 2.0) * erf(w / (sigma * math.sqrt(2.0)))


def _hn_loglik(sigma, sum_x2, n, w):
    return -sum_x2 / (2.0 * sigma * sigma) - n * math.log(_esw_closed(sigma, w))


def half_normal_mle(distances, w: float, bracket: Optional[Sequence[float]] = None) -> HalfNormalFit:
    """Maximum-likelihood scale of a half-normal detection function truncated at ``w``.

    Bounded Brent search on log(sigma) over ``bracket`` (default
    [w / 1000, 1000 w]).  Estimates within 1e-6 (relative) of either end
    are flagged ``at_bracket_edge``.
    """
    if isinstance(distances, DistanceData):
        x = distances.all_distances
    else:
        x = np.asarray(distances, dtype=float).ravel()
    if x.size < 2:
        raise EstimationError("half-normal fit needs at least two distances")
    if not w > 0:
        raise DomainError("truncation must be positive")
    if x.min() < 0 or x.max() > w:
        raise DomainError("distances must lie in [0, w]")
    lo, hi = bracket if bracket is not None else (w * 1e-3, w * 1e3)
    n = x.size
    sx2 = float(np.sum(x * x))
    res = optimize.minimize_scalar(
        lambda ls: -_hn_loglik(math.exp(ls), sx2, n, w),
        bounds=(math.log(lo), math.log(hi)), method="bounded",
        options={"xatol": 1e-10, "maxiter": 500})
    sigma = math.exp(res.x)
    edge = (res.x - math.log(lo) < 1e-6) or (math.log(hi) - res.x < 1e-6)
    # observed information on sigma by central differences
    h = 1e-4 * sigma
    d2 = (_hn_loglik(sigma + h, sx2, n, w) - 2 * _hn_loglik(sigma, sx2, n, w)
          + _hn_loglik(sigma - h, sx2, n, w)) / (h * h)
    se = math.sqrt(-1.0 / d2) if d2 < 0 and not edge else float("nan")
    return HalfNormalFit(sigma, bool(edge), -float(res.fun), se)


def ds_abundance(data: DistanceData, w: float, area_km2: float, delta_days: float,
                 lambda_per_day: float, sigma: Optional[float] = None) -> DsEstimate:
    """Convert detections into an animal abundance estimate.

    vestige density = n / (2 esw L); vestiges produced per day = density / delta;
    animal density = per-day production / lambda; abundance = density * area.
    The interval is log-normal with the encounter-rate variance (between
    transects) and the detection-function variance combined by the delta
    method.  Pass ``sigma`` to skip fitting the detection function.
    """
    if not (delta_days > 0 and lambda_per_day > 0 and area_km2 > 0):
        raise DomainError("delta_days, lambda_per_day and area_km2 must be positive")
    n_i = data.counts.astype(float)
    n = n_i.sum()
    if n == 0:
        raise EstimationError("no detections; abundance cannot be estimated")
    l_i = data.transect_lengths_m / 1000.0
    L = l_i.sum()

    edge = False
    cv_esw2 = 0.0
    if sigma is None:
        fit = half_normal_mle(data, w)
        sigma, edge = fit.sigma, fit.at_bracket_edge
        if math.isfinite(fit.se):
            dsig = 1e-6 * sigma
            desw = (_esw_closed(sigma + dsig, w) - _esw_closed(sigma - dsig, w)) / (2 * dsig)
            cv_esw2 = (desw * fit.se / _esw_closed(sigma, w)) ** 2
    esw = effective_strip_half_width(sigma, w)
    esw_km = esw / 1000.0

    d_vestige = n / (2.0 * esw_km * L)
    per_day = d_vestige / delta_days
    d_animal = per_day / lambda_per_day
    abundance = d_animal * area_km2

    k = l_i.size
    cv_er2 = 0.0
    if k > 1:
        er = n / L
        var_er = k / (L * L * (k - 1)) * np.sum(l_i ** 2 * (n_i / l_i - er) ** 2)
        cv_er2 = var_er / er ** 2
    cv2 = cv_er2 + cv_esw2
    c = math.exp(Z975 * math.sqrt(math.log1p(cv2)))
    return DsEstimate(sigma, esw, d_vestige, d_animal, abundance,
                      abundance / c, abundance * c, math.sqrt(cv2), edge)


# ---------------------------------------------------------------------------
# triple Poisson generator
# ---------------------------------------------------------------------------

def simulate_counts(T: int, alpha: float, nu, n_replicates: int, family, phi: Optional[float],
                    rng: np.random.Generator) -> np.ndarray:
    """Draw y[s, t] ~ family(alpha * T * nu[s]) independently."""
    family = Family.parse(family)
    nu = np.asarray(nu, dtype=float)
    mu = np.repeat((alpha * T * nu)[:, None], n_replicates, axis=1)
    if family is Family.POISSON:
        return rng.poisson(mu)
    if phi is None or not phi > 0:
        raise DomainError("negative binomial simulation needs phi > 0")
    return rng.negative_binomial(phi, phi / (phi + mu))


def simulate_tp_data(lambda_G: float, lambda_N: float, alpha: float, nu, n_replicates: int,
                     family=Family.POISSON, phi: Optional[float] = None,
                     rng: Optional[np.random.Generator] = None):
    """Generate counts from the triple Poisson hierarchy.

    Returns (SurveyDataset, true G, true T).
    """
    if rng is None:
        raise DomainError("an explicit random generator is required")
    if not (lambda_G > 0 and lambda_N > 0 and alpha > 0) or n_replicates < 1:
        raise DomainError("rates must be positive and n_replicates >= 1")
    G = int(rng.poisson(lambda_G))
    T = int(rng.poisson(G * lambda_N)) if G > 0 else 0
    y = simulate_counts(T, alpha, nu, n_replicates, family, phi, rng)
    return SurveyDataset.from_arrays(y, nu), G, T
