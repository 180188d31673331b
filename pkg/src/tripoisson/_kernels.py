"""Compiled scalar densities and Metropolis-within-Gibbs kernels.

Everything here is numba ``njit`` code operating on flat arrays so a whole
chain runs without returning to the interpreter.  The public, validated
entry points live in :mod:`tripoisson.model_core` and
:mod:`tripoisson.inference`.

Layouts shared with the Python side
-----------------------------------
state  : float64[8]  -> (G, T, lambda_G, lambda_N, alpha, phi, cached
         observation log-likelihood, cached phi-only NB term)
priors : kind int64[4], a float64[4], b float64[4] indexed
         (lambda_G, lambda_N, alpha, phi).  Gamma is (shape, rate),
         Uniform is (lower, upper), Fixed is (value, unused).
data   : y float64[n], nu float64[n] (coverage per count), lfact float64[n]
         (log y!), pstats float64[4] = (sum y, sum y log nu, sum nu, sum log y!)
"""
import math

import numpy as np
from numba import njit

GAMMA, UNIFORM, FIXED = 0, 1, 2
POISSON, NEGBIN = 0, 1

# state slots
S_G, S_T, S_LG, S_LN, S_ALPHA, S_PHI, S_OBS, S_APHI = 0, 1, 2, 3, 4, 5, 6, 7
STATE_SIZE = 8
STABLE_PHI = 1e5
# prior slots
P_LG, P_LN, P_ALPHA, P_PHI = 0, 1, 2, 3

# kernel slots, in sweep order
K_LAMBDA_G, K_LAMBDA_N, K_ALPHA, K_G, K_T, K_PHI, K_RIDGE_TA, K_RIDGE_GN = range(8)
N_KERNELS = 8
KERNEL_NAMES = ("lambda_G", "lambda_N", "alpha", "G", "T", "phi",
                "T_alpha_ridge", "G_lambda_N_ridge")
INTEGER_KERNELS = (K_G, K_T, K_RIDGE_TA, K_RIDGE_GN)

TARGET_ACCEPT = 0.44
MIN_SCALE = 1e-3
MIN_INT_SCALE = 0.5
MAX_SCALE = 1e7

NEG_INF = -np.inf


@njit(cache=True)
def log_pmf_poisson(y, mu):
    if mu == 0.0:
        return 0.0 if y == 0 else NEG_INF
    return y * math.log(mu) - mu - math.lgamma(y + 1.0)


@njit(cache=True)
def _log_rising(phi, y):
    # log Gamma(y + phi) - log Gamma(phi); the lgamma difference loses
    # digits for very large phi
    if phi > 1e5 and y <= 1000:
        s = 0.0
        for k in range(int(y)):
            s += math.log(phi + k)
        return s
    return math.lgamma(y + phi) - math.lgamma(phi)


@njit(cache=True)
def log_pmf_negbin(y, mu, phi):
    if mu == 0.0:
        return 0.0 if y == 0 else NEG_INF
    out = _log_rising(phi, y) - math.lgamma(y + 1.0) - phi * math.log1p(mu / phi)
    if y > 0:
        out += y * (math.log(mu) - math.log(phi + mu))
    return out


@njit(cache=True)
def log_prior_density(kind, a, b, x):
    if kind == FIXED:
        return 0.0
    if kind == GAMMA:
        if x <= 0.0:
            return NEG_INF
        return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x
    if x < a or x > b:
        return NEG_INF
    return -math.log(b - a)


@njit(cache=True)
def latent_log_prior(G, T, lambda_G, lambda_N):
    if G == 0:
        if T > 0:
            return NEG_INF
        return -lambda_G
    return log_pmf_poisson(G, lambda_G) + log_pmf_poisson(T, G * lambda_N)


@njit(cache=True)
def nb_phi_term(y, lfact, phi):
    """sum_i [log Gamma(y_i + phi) - log Gamma(phi) - log y_i!]; depends on phi only."""
    lg = math.lgamma(phi)
    s = 0.0
    for i in range(y.shape[0]):
        s += math.lgamma(y[i] + phi) - lg - lfact[i]
    return s


@njit(cache=True)
def obs_loglik_fast(y, nu, lfact, pstats, T, alpha, phi, family, a_phi):
    """Observation log-likelihood given the precomputed ``nb_phi_term``."""
    if T == 0:
        return 0.0 if pstats[0] == 0.0 else NEG_INF
    scale = alpha * T
    if family == POISSON:
        return pstats[0] * math.log(scale) + pstats[1] - scale * pstats[2] - pstats[3]
    if phi > STABLE_PHI:
        s = 0.0
        for i in range(y.shape[0]):
            s += log_pmf_negbin(y[i], scale * nu[i], phi)
        return s
    s = a_phi + pstats[0] * math.log(scale) + pstats[1] + y.shape[0] * phi * math.log(phi)
    for i in range(y.shape[0]):
        s -= (phi + y[i]) * math.log(phi + scale * nu[i])
    return s


@njit(cache=True)
def obs_loglik(y, nu, lfact, pstats, T, alpha, phi, family):
    a_phi = 0.0
    if family == NEGBIN and phi <= STABLE_PHI and T != 0:
        a_phi = nb_phi_term(y, lfact, phi)
    return obs_loglik_fast(y, nu, lfact, pstats, T, alpha, phi, family, a_phi)


@njit(cache=True)
def refresh_cache(st, y, nu, lfact, pstats, family):
    a_phi = 0.0
    if family == NEGBIN:
        a_phi = nb_phi_term(y, lfact, st[S_PHI])
    st[S_APHI] = a_phi
    st[S_OBS] = obs_loglik_fast(y, nu, lfact, pstats, st[S_T], st[S_ALPHA], st[S_PHI], family, a_phi)


@njit(cache=True)
def log_posterior_arrays(st, y, nu, lfact, pstats, family, pk, pa, pb):
    G = st[S_G]
    T = st[S_T]
    lp = latent_log_prior(G, T, st[S_LG], st[S_LN])
    if lp == NEG_INF:
        return NEG_INF
    for j in range(3):
        lp += log_prior_density(pk[j], pa[j], pb[j], st[S_LG + j])
    if family == NEGBIN:
        lp += log_prior_density(pk[P_PHI], pa[P_PHI], pb[P_PHI], st[S_PHI])
    if lp == NEG_INF:
        return NEG_INF
    return lp + obs_loglik(y, nu, lfact, pstats, T, st[S_ALPHA], st[S_PHI], family)


@njit(cache=True)
def _int_step(rng, scale):
    return math.floor(rng.normal(0.0, scale) + 0.5)


@njit(cache=True)
def _accept(rng, log_ratio):
    if log_ratio >= 0.0:
        return True
    return math.log(rng.random()) < log_ratio


TRUNC_TRIES = 16


@njit(cache=True)
def _trunc_gamma(rng, shape, rate, lo, hi):
    """Gamma(shape, rate) restricted to [lo, hi] by rejection; -1.0 if every try missed.

    The chance of a miss depends only on (shape, rate, lo, hi), never on the
    current value, so falling back to a Metropolis step on a miss keeps the
    combined kernel invariant.
    """
    for _ in range(TRUNC_TRIES):
        x = rng.gamma(shape, 1.0 / rate)
        if lo <= x <= hi and x > 0.0:
            return x
    return -1.0


# -- individual kernels ------------------------------------------------------
# Each returns 1 (accepted), 0 (rejected) or -1 (exact draw / no proposal
# made); only 0/1 outcomes feed the acceptance statistics.

@njit(cache=True)
def k_lambda_G(rng, st, pk, pa, pb, scale):
    kind = pk[P_LG]
    if kind == FIXED:
        return -1
    G = st[S_G]
    if kind == GAMMA:
        st[S_LG] = rng.gamma(pa[P_LG] + G, 1.0 / (pb[P_LG] + 1.0))
        return -1
    x = _trunc_gamma(rng, G + 1.0, 1.0, pa[P_LG], pb[P_LG])
    if x > 0.0:
        st[S_LG] = x
        return -1
    cur = st[S_LG]
    prop = cur * math.exp(rng.normal(0.0, scale))
    lp_prop = log_prior_density(kind, pa[P_LG], pb[P_LG], prop)
    if lp_prop == NEG_INF:
        return 0
    lr = (log_pmf_poisson(G, prop) + lp_prop + math.log(prop)
          - log_pmf_poisson(G, cur) - log_prior_density(kind, pa[P_LG], pb[P_LG], cur)
          - math.log(cur))
    if _accept(rng, lr):
        st[S_LG] = prop
        return 1
    return 0


@njit(cache=True)
def k_lambda_N(rng, st, pk, pa, pb, scale):
    kind = pk[P_LN]
    if kind == FIXED:
        return -1
    G = st[S_G]
    T = st[S_T]
    if kind == GAMMA:
        st[S_LN] = rng.gamma(pa[P_LN] + T, 1.0 / (pb[P_LN] + G))
        return -1
    if G == 0:
        st[S_LN] = rng.uniform(pa[P_LN], pb[P_LN])
        return -1
    x = _trunc_gamma(rng, T + 1.0, G, pa[P_LN], pb[P_LN])
    if x > 0.0:
        st[S_LN] = x
        return -1
    cur = st[S_LN]
    prop = cur * math.exp(rng.normal(0.0, scale))
    lp_prop = log_prior_density(kind, pa[P_LN], pb[P_LN], prop)
    if lp_prop == NEG_INF:
        return 0
    lr = lp_prop + math.log(prop) - log_prior_density(kind, pa[P_LN], pb[P_LN], cur) - math.log(cur)
    if G > 0:
        lr += log_pmf_poisson(T, G * prop) - log_pmf_poisson(T, G * cur)
    if _accept(rng, lr):
        st[S_LN] = prop
        return 1
    return 0


@njit(cache=True)
def k_alpha(rng, st, y, nu, lfact, pstats, family, pk, pa, pb, scale):
    kind = pk[P_ALPHA]
    if kind == FIXED:
        return -1
    T = st[S_T]
    if family == POISSON and kind == GAMMA:
        st[S_ALPHA] = rng.gamma(pa[P_ALPHA] + pstats[0],
                                1.0 / (pb[P_ALPHA] + T * pstats[2]))
        st[S_OBS] = obs_loglik_fast(y, nu, lfact, pstats, T, st[S_ALPHA], st[S_PHI], family, 0.0)
        return -1
    if family == POISSON and kind == UNIFORM and T > 0:
        x = _trunc_gamma(rng, pstats[0] + 1.0, T * pstats[2], pa[P_ALPHA], pb[P_ALPHA])
        if x > 0.0:
            st[S_ALPHA] = x
            st[S_OBS] = obs_loglik_fast(y, nu, lfact, pstats, T, x, st[S_PHI], family, 0.0)
            return -1
    cur = st[S_ALPHA]
    prop = cur * math.exp(rng.normal(0.0, scale))
    lp_prop = log_prior_density(kind, pa[P_ALPHA], pb[P_ALPHA], prop)
    if lp_prop == NEG_INF:
        return 0
    new_obs = obs_loglik_fast(y, nu, lfact, pstats, T, prop, st[S_PHI], family, st[S_APHI])
    lr = (new_obs + lp_prop + math.log(prop) - st[S_OBS]
          - log_prior_density(kind, pa[P_ALPHA], pb[P_ALPHA], cur) - math.log(cur))
    if _accept(rng, lr):
        st[S_ALPHA] = prop
        st[S_OBS] = new_obs
        return 1
    return 0


@njit(cache=True)
def k_G(rng, st, scale):
    step = _int_step(rng, scale)
    if step == 0:
        return -1
    G = st[S_G]
    T = st[S_T]
    prop = G + step
    if prop < 0 or (prop == 0 and T > 0):
        return 0
    lr = (latent_log_prior(prop, T, st[S_LG], st[S_LN])
          - latent_log_prior(G, T, st[S_LG], st[S_LN]))
    if _accept(rng, lr):
        st[S_G] = prop
        return 1
    return 0


@njit(cache=True)
def k_T(rng, st, y, nu, lfact, pstats, family, scale):
    step = _int_step(rng, scale)
    if step == 0:
        return -1
    G = st[S_G]
    T = st[S_T]
    prop = T + step
    if prop < 0 or (G == 0 and prop > 0):
        return 0
    new = latent_log_prior(G, prop, st[S_LG], st[S_LN])
    if new == NEG_INF:
        return 0
    new_obs = obs_loglik_fast(y, nu, lfact, pstats, prop, st[S_ALPHA], st[S_PHI], family, st[S_APHI])
    if new_obs == NEG_INF:
        return 0
    old = latent_log_prior(G, T, st[S_LG], st[S_LN]) + st[S_OBS]
    if _accept(rng, new + new_obs - old):
        st[S_T] = prop
        st[S_OBS] = new_obs
        return 1
    return 0


@njit(cache=True)
def k_phi(rng, st, y, nu, lfact, pstats, family, pk, pa, pb, scale):
    kind = pk[P_PHI]
    if family != NEGBIN or kind == FIXED:
        return -1
    cur = st[S_PHI]
    prop = cur * math.exp(rng.normal(0.0, scale))
    lp_prop = log_prior_density(kind, pa[P_PHI], pb[P_PHI], prop)
    if lp_prop == NEG_INF:
        return 0
    a_prop = nb_phi_term(y, lfact, prop)
    new_obs = obs_loglik_fast(y, nu, lfact, pstats, st[S_T], st[S_ALPHA], prop, family, a_prop)
    lr = (new_obs + lp_prop + math.log(prop) - st[S_OBS]
          - log_prior_density(kind, pa[P_PHI], pb[P_PHI], cur) - math.log(cur))
    if _accept(rng, lr):
        st[S_PHI] = prop
        st[S_APHI] = a_prop
        st[S_OBS] = new_obs
        return 1
    return 0


@njit(cache=True)
def _log_norm_cdf(x):
    return math.log(0.5 * math.erfc(-x / math.sqrt(2.0)))


@njit(cache=True)
def _log_q_round(dst, src, scale):
    # log P(round(src * exp(N(0, scale))) == dst) for dst >= 1
    hi = math.log((dst + 0.5) / src) / scale
    if dst - 0.5 <= 0.0:
        return _log_norm_cdf(hi)
    lo = math.log((dst - 0.5) / src) / scale
    # P(lo < Z < hi) computed on the side with the smaller tail
    if lo > 0.0:
        a = _log_norm_cdf(-lo)
        b = _log_norm_cdf(-hi)
    else:
        a = _log_norm_cdf(hi)
        b = _log_norm_cdf(lo)
    if b == NEG_INF:
        return a
    if a <= b:
        return NEG_INF
    return a + math.log1p(-math.exp(b - a))


@njit(cache=True)
def _log_int_proposal(rng, cur, scale):
    """Multiplicative integer proposal round(cur * e^z); returns (prop, log q ratio)."""
    prop = math.floor(cur * math.exp(rng.normal(0.0, scale)) + 0.5)
    if prop < 1.0 or prop == cur:
        return prop, 0.0
    fwd = _log_q_round(prop, cur, scale)
    rev = _log_q_round(cur, prop, scale)
    if fwd == NEG_INF or rev == NEG_INF:
        return -1.0, 0.0
    return prop, rev - fwd


@njit(cache=True)
def k_ridge_T_alpha(rng, st, pk, pa, pb, scale):
    # moves along alpha*T = const, where the likelihood is flat
    if pk[P_ALPHA] == FIXED:
        return -1
    T = st[S_T]
    if T < 1:
        return -1
    prop, log_q = _log_int_proposal(rng, T, scale)
    if prop == T:
        return -1
    if prop < 1:
        return 0
    G = st[S_G]
    alpha = st[S_ALPHA]
    alpha_prop = alpha * T / prop
    lp_a = log_prior_density(pk[P_ALPHA], pa[P_ALPHA], pb[P_ALPHA], alpha_prop)
    if lp_a == NEG_INF:
        return 0
    lr = (latent_log_prior(G, prop, st[S_LG], st[S_LN]) + lp_a
          - latent_log_prior(G, T, st[S_LG], st[S_LN])
          - log_prior_density(pk[P_ALPHA], pa[P_ALPHA], pb[P_ALPHA], alpha)
          + math.log(T / prop) + log_q)
    if _accept(rng, lr):
        st[S_T] = prop
        st[S_ALPHA] = alpha_prop
        return 1
    return 0


@njit(cache=True)
def k_ridge_G_lambda_N(rng, st, pk, pa, pb, scale):
    # moves along G*lambda_N = const, leaving p(T | G, lambda_N) unchanged
    if pk[P_LN] == FIXED:
        return -1
    G = st[S_G]
    if G < 1:
        return -1
    prop, log_q = _log_int_proposal(rng, G, scale)
    if prop == G:
        return -1
    if prop < 1:
        return 0
    lam = st[S_LN]
    lam_prop = lam * G / prop
    lp_l = log_prior_density(pk[P_LN], pa[P_LN], pb[P_LN], lam_prop)
    if lp_l == NEG_INF:
        return 0
    lr = (log_pmf_poisson(prop, st[S_LG]) + lp_l
          - log_pmf_poisson(G, st[S_LG])
          - log_prior_density(pk[P_LN], pa[P_LN], pb[P_LN], lam)
          + math.log(G / prop) + log_q)
    if _accept(rng, lr):
        st[S_G] = prop
        st[S_LN] = lam_prop
        return 1
    return 0


@njit(cache=True)
def _dispatch(k, rng, st, y, nu, lfact, pstats, family, pk, pa, pb, scale):
    if k == K_LAMBDA_G:
        return k_lambda_G(rng, st, pk, pa, pb, scale)
    if k == K_LAMBDA_N:
        return k_lambda_N(rng, st, pk, pa, pb, scale)
    if k == K_ALPHA:
        return k_alpha(rng, st, y, nu, lfact, pstats, family, pk, pa, pb, scale)
    if k == K_G:
        return k_G(rng, st, scale)
    if k == K_T:
        return k_T(rng, st, y, nu, lfact, pstats, family, scale)
    if k == K_PHI:
        return k_phi(rng, st, y, nu, lfact, pstats, family, pk, pa, pb, scale)
    if k == K_RIDGE_TA:
        return k_ridge_T_alpha(rng, st, pk, pa, pb, scale)
    return k_ridge_G_lambda_N(rng, st, pk, pa, pb, scale)


@njit(cache=True)
def run_chain(rng, st, y, nu, lfact, pstats, family, pk, pa, pb,
              scales, enabled, n_iter, burn_in, thin, adapt, window):
    """Run one chain in place on ``st``.

    Returns (draws[n_keep, 6], accepted[8], tried[8]) with acceptance counted
    after burn-in only.  ``scales`` is updated in place during burn-in when
    ``adapt`` is set (Robbins-Monro on the log scale, batch gain 1/sqrt(b)).
    """
    n_keep = 0
    if n_iter > burn_in:
        n_keep = (n_iter - burn_in + thin - 1) // thin
    draws = np.empty((n_keep, 6))
    accepted = np.zeros(N_KERNELS)
    tried = np.zeros(N_KERNELS)
    win_acc = np.zeros(N_KERNELS)
    win_tried = np.zeros(N_KERNELS)
    n_batch = 0
    row = 0
    refresh_cache(st, y, nu, lfact, pstats, family)
    for it in range(n_iter):
        for k in range(N_KERNELS):
            if enabled[k] == 0:
                continue
            r = _dispatch(k, rng, st, y, nu, lfact, pstats, family, pk, pa, pb, scales[k])
            if r >= 0:
                if it < burn_in:
                    win_tried[k] += 1.0
                    win_acc[k] += r
                else:
                    tried[k] += 1.0
                    accepted[k] += r
        if adapt and it < burn_in and (it + 1) % window == 0:
            n_batch += 1
            gain = 1.0 / math.sqrt(n_batch)
            for k in range(N_KERNELS):
                if win_tried[k] > 0:
                    rate = win_acc[k] / win_tried[k]
                    s = scales[k] * math.exp(gain * (rate - TARGET_ACCEPT))
                    lo = MIN_SCALE
                    if k == K_G or k == K_T:
                        lo = MIN_INT_SCALE
                    scales[k] = min(max(s, lo), MAX_SCALE)
                win_acc[k] = 0.0
                win_tried[k] = 0.0
        if it >= burn_in and (it - burn_in) % thin == 0:
            for j in range(6):
                draws[row, j] = st[j]
            row += 1
    return draws, accepted, tried


@njit(cache=True)
def deviance_draws(T, alpha, phi, y, nu, lfact, pstats, family):
    out = np.empty(T.shape[0])
    for i in range(T.shape[0]):
        out[i] = -2.0 * obs_loglik(y, nu, lfact, pstats, T[i], alpha[i], phi[i], family)
    return out


@njit(cache=True)
def grid_log_posterior(G_max, T_max, st0, y, nu, lfact, pstats, family, pk, pa, pb):
    """log_posterior on every (G, T) cell with the continuous values in ``st0``."""
    out = np.empty((G_max + 1, T_max + 1))
    st = st0.copy()
    obs = np.empty(T_max + 1)
    for t in range(T_max + 1):
        obs[t] = obs_loglik(y, nu, lfact, pstats, t, st0[S_ALPHA], st0[S_PHI], family)
    hyper = 0.0
    for j in range(3):
        hyper += log_prior_density(pk[j], pa[j], pb[j], st0[S_LG + j])
    if family == NEGBIN:
        hyper += log_prior_density(pk[P_PHI], pa[P_PHI], pb[P_PHI], st0[S_PHI])
    for g in range(G_max + 1):
        st[S_G] = g
        for t in range(T_max + 1):
            lp = latent_log_prior(g, t, st0[S_LG], st0[S_LN])
            if lp == NEG_INF or obs[t] == NEG_INF:
                out[g, t] = NEG_INF
            else:
                out[g, t] = lp + hyper + obs[t]
    return out


@njit(cache=True)
def obs_loglik_range(T_hi, alpha, phi, y, nu, lfact, pstats, family):
    out = np.empty(T_hi + 1)
    for t in range(T_hi + 1):
        out[t] = obs_loglik(y, nu, lfact, pstats, t, alpha, phi, family)
    return out
