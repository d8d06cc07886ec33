"""Shared test utilities: grid-CDF oracles, raw panels, batch-means errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mstcar.panel import CountPanel, PanelIndex


def grid_cdf(logpdf, lo: float, hi: float, n: int = 20001):
    """Normalized CDF on a grid from an unscaled log-density (oracle side).

    Trapezoid integration with its own normalization, so it stays valid for
    densities supplied without constants.
    """
    xs = np.linspace(lo, hi, n)
    logs = np.array([logpdf(x) for x in xs])
    dens = np.exp(logs - logs.max())
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * np.diff(xs) / 2.0)])
    cdf /= cdf[-1]

    def evaluate(x):
        return np.interp(x, xs, cdf)

    return evaluate


def batch_mean_se(series: np.ndarray, n_batches: int = 40) -> tuple[float, float]:
    """Mean and batch-means standard error of a (possibly autocorrelated) series."""
    series = np.asarray(series, dtype=float)
    size = series.size // n_batches
    if size < 1:
        raise ValueError("series too short for the requested batches")
    means = series[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


@dataclass
class RawPanel:
    """Counts container without the Y <= n invariant (model-simulated data)."""

    deaths: np.ndarray
    populations: np.ndarray

    @property
    def shape(self):
        return self.deaths.shape


def toy_panel(deaths: np.ndarray, populations: np.ndarray) -> CountPanel:
    """Wrap arrays of shape (regions, times, groups) in a labeled panel."""
    ns, nt, ng = deaths.shape
    index = PanelIndex(
        tuple(f"r{i}" for i in range(ns)),
        tuple(f"g{k}" for k in range(ng)),
        tuple(f"t{t}" for t in range(nt)),
    )
    return CountPanel(index, np.asarray(deaths), np.asarray(populations))
