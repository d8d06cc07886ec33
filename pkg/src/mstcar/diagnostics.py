"""Chain convergence diagnostics: effective sample size and split R-hat."""

from __future__ import annotations

import numpy as np


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS from the initial positive sequence of autocovariance pair sums.

    Returns the nominal length for (near-)constant chains.
    """
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var <= 0 or not np.isfinite(var):
        return float(n)
    # autocovariance via FFT
    size = 1
    while size < 2 * n:
        size <<= 1
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real / n
    rho = acov / acov[0]
    # Geyer: sum consecutive lag pairs while their sum stays positive
    total = 0.0
    for lag in range(1, n - 1, 2):
        pair = rho[lag] + rho[lag + 1]
        if pair <= 0:
            break
        total += pair
    ess = n / (1.0 + 2.0 * total)
    return float(min(max(ess, 1.0), n))


def split_rhat(chain: np.ndarray) -> float:
    """Potential scale reduction factor on the two halves of one chain."""
    x = np.asarray(chain, dtype=float)
    n = x.size // 2
    if n < 2:
        return 1.0
    halves = np.stack([x[:n], x[n:2 * n]])
    within = halves.var(axis=1, ddof=1).mean()
    between = n * halves.mean(axis=1).var(ddof=1)
    if within <= 0:
        return 1.0
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))
