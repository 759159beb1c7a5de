"""MCMC convergence checks for scalar chains."""
from __future__ import annotations

import math

import numpy as np

# upper 5% point of the Cramer-von Mises statistic of a Brownian bridge
CVM_CRITICAL_05 = 0.46136


def _batch_means_var(x: np.ndarray, n_batches: int = 20) -> float:
    """Variance of the mean of x estimated from non-overlapping batch means."""
    nb = min(n_batches, x.size)
    b = x.size // nb
    means = x[: nb * b].reshape(nb, b).mean(axis=1)
    if nb < 2:
        return 0.0
    return float(means.var(ddof=1) / nb)


def geweke_z(chain, frac_a: float = 0.1, frac_b: float = 0.5, n_batches: int = 20) -> float:
    """Difference of early and late window means in standard-error units."""
    x = np.asarray(chain, dtype=np.float64)
    if x.size < 20:
        raise ValueError("chain too short for Geweke diagnostic")
    a = x[: int(math.floor(frac_a * x.size))]
    b = x[x.size - int(math.floor(frac_b * x.size)) :]
    va = _batch_means_var(a, n_batches)
    vb = _batch_means_var(b, n_batches)
    if va + vb <= 0:
        raise ValueError("degenerate chain: zero variance in both windows")
    return float((a.mean() - b.mean()) / math.sqrt(va + vb))


def autocorrelation(chain, max_lag: int) -> np.ndarray:
    x = np.asarray(chain, dtype=np.float64)
    if x.size <= max_lag:
        raise ValueError("chain shorter than max_lag + 1")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom <= 0:
        raise ValueError("zero-variance chain")
    return np.array([dev[: x.size - h] @ dev[h:] / denom for h in range(max_lag + 1)])


def heidelberger_welch(chain, alpha: float = 0.05) -> tuple[bool, int | None]:
    """Stationarity test, discarding successive 10% blocks from the start.

    Each candidate segment gets a Cramer-von Mises test of its scaled
    partial-sum bridge, with the spectral density at zero estimated by batch
    means of that same segment. A deterministic trend therefore cannot pass
    by inflating the variance estimate. Returns ``(passed, start_index)``;
    ``start_index`` is None on failure. Only the 5% level is tabulated.
    """
    if alpha != 0.05:
        raise ValueError("only alpha=0.05 is supported")
    x = np.asarray(chain, dtype=np.float64)
    n = x.size
    if n < 50:
        raise ValueError("chain too short for Heidelberger-Welch")
    if np.ptp(x) == 0:
        return True, 0
    for start in range(0, n // 2 + 1, n // 10):
        y = x[start:]
        m = y.size
        s0 = m * _batch_means_var(y)
        if s0 <= 0:
            continue
        bridge = np.cumsum(y) - y.mean() * np.arange(1, m + 1)
        stat = float(bridge @ bridge) / (m * m * s0)
        if stat < CVM_CRITICAL_05:
            return True, start
    return False, None
