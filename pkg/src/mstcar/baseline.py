"""Empirical-Bayes Poisson-gamma comparator with closed-form posteriors.

Each (time, group) layer gets a Gamma(shape, rate) prior whose rate is a
pseudo-population (default 1,000 persons) and whose shape matches the
layer's national crude rate, so the prior mean is the national rate.  Cell
posteriors are conjugate; predictive replication reuses the shared
coverage assessment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import CoverageReport, coverage_assess
from .panel import CountPanel
from .rng import RngStream

DEFAULT_PSEUDO_POPULATION = 1000.0


@dataclass(frozen=True)
class EbLayerParams:
    """Per-layer Gamma prior (shape, rate); mean = national crude rate."""

    shape: np.ndarray          # a_kt, (n_times, n_groups)
    rate: np.ndarray           # b_kt, (n_times, n_groups)
    zero_death_layers: np.ndarray  # bool mask of improper (a == 0) layers

    def __post_init__(self):
        if np.any(self.rate <= 0):
            raise ValueError("pseudo-population rate must be positive")
        if np.any(self.shape < 0):
            raise ValueError("prior shape must be nonnegative")


def eb_hyperparams(panel: CountPanel,
                   pseudo_population: float = DEFAULT_PSEUDO_POPULATION) -> EbLayerParams:
    """Layer shapes from national crude rates times the pseudo-population.

    Layers with zero deaths get shape 0 and are flagged: their prior is
    improper and posterior evaluation errors for cells that stay at Y = 0.
    """
    if pseudo_population <= 0:
        raise ValueError("pseudo-population must be positive")
    tot_y, tot_n = panel.layer_totals()
    if np.any(tot_n == 0):
        t, k = np.argwhere(tot_n == 0)[0]
        raise ValueError(
            f"layer time={panel.index.time_labels[t]} "
            f"group={panel.index.group_labels[k]} has zero total population")
    shape = tot_y / tot_n * pseudo_population
    rate = np.full(shape.shape, float(pseudo_population))
    return EbLayerParams(shape=shape, rate=rate, zero_death_layers=(tot_y == 0))


def eb_posterior(panel: CountPanel, params: EbLayerParams) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate per-cell posterior Gamma(shape + Y, rate + n)."""
    post_shape = params.shape[None, :, :] + panel.deaths
    post_rate = params.rate[None, :, :] + panel.populations
    if np.any(post_shape == 0):
        i, t, k = np.argwhere(post_shape == 0)[0]
        raise ValueError(
            f"improper posterior at region={panel.index.region_labels[i]} "
            f"time={panel.index.time_labels[t]} group={panel.index.group_labels[k]}: "
            "zero-death layer and zero observed count")
    return post_shape, post_rate


def eb_predictive_replicates(panel: CountPanel, posteriors: tuple[np.ndarray, np.ndarray],
                             n_replicates: int, stream: RngStream,
                             ) -> tuple[np.ndarray, CoverageReport]:
    """Replicated counts from the Gamma-Poisson predictive, plus coverage."""
    if n_replicates < 40:
        raise ValueError("need at least 40 replicates for stable intervals")
    post_shape, post_rate = posteriors
    pops = panel.populations.astype(float)
    reps = np.empty((n_replicates,) + panel.shape, dtype=np.int64)
    for ell in range(n_replicates):
        gen = stream.substream(ell).generator()
        gamma_draw = gen.gamma(post_shape, 1.0 / post_rate)
        reps[ell] = gen.poisson(pops * gamma_draw)
    return reps, coverage_assess(reps, panel)
