"""Cross-chain convergence diagnostics: split R-hat and effective sample size."""

from __future__ import annotations

import math

import numpy as np

#: ESS is capped at this multiple of the total draw count (anticorrelated
#: chains can legitimately beat i.i.d. efficiency, but not without bound).
ESS_CAP_FACTOR = 10.0


def _split_halves(chains: np.ndarray) -> np.ndarray:
    """Split each chain into halves: (C, N) -> (2C, N//2), dropping an odd tail."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError(f"expected (n_chains, n_draws), got shape {chains.shape}")
    half = chains.shape[1] // 2
    return np.vstack([chains[:, :half], chains[:, chains.shape[1] - half:]])


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction factor for one parameter.

    ``chains`` has shape (n_chains, n_draws).  Chains with zero within-chain
    variance return +inf (a sentinel, never NaN): a frozen chain carries no
    evidence of mixing.
    """
    split = _split_halves(chains)
    m, n = split.shape
    if n < 2:
        raise ValueError("need at least 4 draws per chain for split R-hat")
    means = split.mean(axis=1)
    w = split.var(axis=1, ddof=1).mean()
    if w == 0.0:
        return math.inf
    b = n * means.var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (1/N) autocovariance of one chain via FFT."""
    n = x.shape[0]
    xc = x - x.mean()
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real
    return acov / n


def ess(chains: np.ndarray) -> float:
    """Effective sample size for one parameter from split chains.

    Uses the combined-chain autocorrelation estimate with Geyer's
    initial-sequence rule: lag pairs are accumulated until the first pair sum
    goes negative (pairs are also forced monotone non-increasing).  The result
    is clipped to at most ``ESS_CAP_FACTOR`` times the total number of draws;
    antithetic chains hit the cap rather than reporting an unbounded value.
    Constant chains also return the cap (they are exactly their own mean).
    """
    chains = np.asarray(chains, dtype=float)
    total = chains.shape[0] * chains.shape[1]
    cap = ESS_CAP_FACTOR * total
    split = _split_halves(chains)
    m, n = split.shape
    if n < 2:
        raise ValueError("need at least 4 draws per chain for ESS")

    chain_vars = split.var(axis=1, ddof=1)
    w = chain_vars.mean()
    means = split.mean(axis=1)
    b = n * means.var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + b / n
    if var_plus == 0.0:
        return cap

    acov = np.stack([_autocovariance(split[c]) for c in range(m)])
    mean_acov = acov.mean(axis=0)
    rho = 1.0 - (w - mean_acov) / var_plus
    rho[0] = 1.0

    # Geyer pairs rho[2k] + rho[2k+1], truncated at the first negative sum,
    # then made monotone non-increasing.
    pair_sum = 0.0
    prev = math.inf
    k = 0
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair < 0.0:
            break
        pair = min(pair, prev)
        pair_sum += pair
        prev = pair
        k += 1
    tau = max(-1.0 + 2.0 * pair_sum, 1.0 / ESS_CAP_FACTOR)
    return float(min(m * n / tau, cap))


def rhat_per_param(draws: np.ndarray) -> np.ndarray:
    """Split R-hat of every parameter; ``draws`` has shape (C, N, P)."""
    draws = np.asarray(draws, dtype=float)
    return np.array([split_rhat(draws[:, :, j]) for j in range(draws.shape[2])])


def ess_per_param(draws: np.ndarray) -> np.ndarray:
    """ESS of every parameter; ``draws`` has shape (C, N, P)."""
    draws = np.asarray(draws, dtype=float)
    return np.array([ess(draws[:, :, j]) for j in range(draws.shape[2])])
