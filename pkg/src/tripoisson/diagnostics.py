"""Convergence diagnostics: split-chain R-hat and multi-chain effective sample size."""
import numpy as np


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("chains must have shape (n_chains, n_draws)")
    return x


def split_rhat(chains) -> float:
    """Gelman-Rubin potential scale reduction on chains split in half.

    Constant draws (e.g. a pinned parameter) give 1.0.
    """
    x = _as_chains(chains)
    m, n = x.shape
    half = n // 2
    if half < 2:
        return float("nan")
    parts = np.concatenate([x[:, :half], x[:, n - half:]], axis=0)
    w = parts.var(axis=1, ddof=1).mean()
    means = parts.mean(axis=1)
    if w == 0:
        return 1.0 if np.all(means == means[0]) else float("inf")
    b = half * means.var(ddof=1)
    var_hat = (half - 1) / half * w + b / half
    return float(np.sqrt(var_hat / w))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    # biased autocovariance of each row via FFT
    n = x.shape[1]
    centered = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(f * np.conjugate(f), n=size, axis=1)[:, :n]
    return acov / n


def effective_sample_size(chains) -> float:
    """ESS with Geyer's initial monotone sequence on the combined autocorrelation."""
    x = _as_chains(chains)
    m, n = x.shape
    total = m * n
    if n < 4:
        return float(total)
    if np.all(x == x.flat[0]):
        return float(total)
    acov = _autocovariance(x)
    chain_mean = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus <= 0:
        return float(total)

    acov_mean = acov.mean(axis=0)
    rho = np.zeros(n)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - acov_mean[1]) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - acov_mean[t + 1]) / var_plus
        rho_odd = 1.0 - (mean_var - acov_mean[t + 2]) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even

    # enforce a monotone sequence of pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho[:max_t + 1].sum() + rho[max_t + 1:max_t + 2].sum()
    tau = max(tau, 1.0 / np.log10(total))
    return float(total / tau)
