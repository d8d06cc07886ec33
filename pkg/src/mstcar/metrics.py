"""Posterior functionals: rates, declines, saved person-years, coverage.

Every quantity is computed per MCMC draw end to end (rates, national
aggregates and the metric from the same draw) and only then summarized by
the posterior median and the 2.5/97.5 percentiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import Ar1Spec, assemble_sigma_eta
from .panel import CountPanel
from .rng import RngStream
from .store import SampleStore, atomic_write_text

PER_100K = 1e5
MIN_REPLICATES = 40


@dataclass(frozen=True)
class RatePanelDraws:
    """Stored rate draws lambda = exp(theta), aligned with populations."""

    draws: np.ndarray        # (n_draws, n_regions, n_times, n_groups)
    populations: np.ndarray  # (n_regions, n_times, n_groups)

    def __post_init__(self):
        if self.draws.ndim != 4 or self.draws.shape[0] < 1:
            raise ValueError("need at least one stored draw")
        if self.draws.shape[1:] != self.populations.shape:
            raise ValueError("draws and populations are misaligned")
        if np.any(self.draws <= 0):
            raise ValueError("rates must be strictly positive")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


@dataclass(frozen=True)
class SpyResult:
    """Per-region posterior median and 95% interval of saved person-years."""

    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.any(self.lower > self.median) or np.any(self.median > self.upper):
            raise ValueError("interval endpoints must bracket the median")


@dataclass(frozen=True)
class CoverageReport:
    """Posterior-predictive 95% interval coverage, per region and averaged."""

    region_coverage: np.ndarray   # proportion of a region's cells covered
    mean_coverage: float
    mean_width: float
    cell_lower: np.ndarray
    cell_upper: np.ndarray

    def __post_init__(self):
        if np.any((self.region_coverage < 0) | (self.region_coverage > 1)):
            raise ValueError("coverage proportions must lie in [0, 1]")


def rates_from_store(store: SampleStore, panel: CountPanel) -> RatePanelDraws:
    """Elementwise exponential of the stored log-rate draws."""
    theta = store.theta_draws()
    if theta.shape[0] == 0:
        raise ValueError("store holds no theta draws")
    if theta.shape[1:] != panel.shape:
        raise ValueError("store and panel dimensions disagree")
    return RatePanelDraws(np.exp(theta), panel.populations.astype(float))


def national_rates(rates: np.ndarray, populations: np.ndarray) -> np.ndarray:
    """Population-weighted mean rate per (time, group) layer for one draw."""
    num = np.sum(populations * rates, axis=0)
    den = np.sum(populations, axis=0)
    if np.any(den == 0):
        t, k = np.argwhere(den == 0)[0]
        raise ValueError(f"layer (time={t}, group={k}) has zero total population")
    return num / den


def percent_decline(rates: np.ndarray, populations: np.ndarray, t: int, t_prime: int,
                    mode: str = "per-group") -> np.ndarray:
    """Relative rate decline between two time points; positive = decline.

    ``per-group`` returns (regions, groups); ``age-aggregated`` weights the
    group rates by their populations at each endpoint and returns (regions,).
    """
    if not 0 <= t < t_prime < rates.shape[1]:
        raise ValueError(f"need 0 <= t < t' < n_times, got t={t}, t'={t_prime}")
    if mode == "per-group":
        start = rates[:, t, :]
        end = rates[:, t_prime, :]
        return (start - end) / start
    if mode == "age-aggregated":
        start = np.sum(populations[:, t, :] * rates[:, t, :], axis=1)
        end = np.sum(populations[:, t_prime, :] * rates[:, t_prime, :], axis=1)
        return (start - end) / start
    raise ValueError(f"unknown decline mode {mode!r}")


def spy(rates: np.ndarray, populations: np.ndarray) -> np.ndarray:
    """Saved person-years per 100,000 for one rate draw.

    Averages, over years 2..N_t, the population-weighted gap between the
    rate a region would have had declining at the national pace from year 1
    and its actual rate.  The national decline is evaluated at each year t
    (the cumulative decline from year 1 to t), so a region tracking the
    national trajectory scores exactly zero.
    """
    n_times = rates.shape[1]
    if n_times < 2:
        raise ValueError("saved person-years needs at least two time points")
    nat = national_rates(rates, populations)          # (nt, ng)
    if np.any(nat[0] == 0):
        raise ValueError("national rate in the reference year is zero")
    decline = (nat[0][None, :] - nat) / nat[0][None, :]   # (nt, ng)
    expected = rates[:, 0, :][:, None, :] * (1.0 - decline[None, :, :])  # (ns, nt, ng)
    gap = populations * (expected - rates)
    num = gap[:, 1:, :].sum(axis=2)
    den = populations[:, 1:, :].sum(axis=2)
    if np.any(den == 0):
        raise ValueError("a region has zero population in a post-baseline year")
    return (num / den).mean(axis=1) * PER_100K


def spy_posterior(rates: RatePanelDraws, min_draws: int = MIN_REPLICATES) -> SpyResult:
    """Per-draw saved person-years summarized by median and 95% interval."""
    if rates.n_draws < min_draws:
        raise ValueError(
            f"need at least {min_draws} draws for stable percentiles, got {rates.n_draws}")
    per_draw = np.stack([spy(d, rates.populations) for d in rates.draws])
    lo, med, hi = np.percentile(per_draw, [2.5, 50.0, 97.5], axis=0)
    return SpyResult(median=med, lower=lo, upper=hi)


def predictive_replicates(store: SampleStore, panel: CountPanel, n_replicates: int,
                          stream: RngStream) -> np.ndarray:
    """Poisson replicate counts, one per cell per stored log-rate draw."""
    theta = store.theta_draws()
    if theta.shape[0] < n_replicates:
        raise ValueError(
            f"store holds {theta.shape[0]} theta draws, fewer than L={n_replicates}")
    pops = panel.populations.astype(float)
    reps = np.empty((n_replicates,) + panel.shape, dtype=np.int64)
    for ell in range(n_replicates):
        gen = stream.substream(ell).generator()
        reps[ell] = gen.poisson(pops * np.exp(theta[ell]))
    return reps


def coverage_assess(replicates: np.ndarray, panel: CountPanel,
                    band: tuple[float, float] = (2.5, 97.5)) -> CoverageReport:
    """Proportion of each region's cells whose 95% predictive interval covers Y."""
    if replicates.shape[0] < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates")
    if replicates.shape[1:] != panel.shape:
        raise ValueError("replicates and panel dimensions disagree")
    lo, hi = np.percentile(replicates, list(band), axis=0)
    inside = (panel.deaths >= lo) & (panel.deaths <= hi)
    region_cov = inside.reshape(panel.shape[0], -1).mean(axis=1)
    return CoverageReport(
        region_coverage=region_cov,
        mean_coverage=float(region_cov.mean()),
        mean_width=float(np.mean(hi - lo)),
        cell_lower=lo,
        cell_upper=hi,
    )


def sigma_eta_trajectories(store: SampleStore) -> dict[str, np.ndarray]:
    """Posterior summary of the covariance diagonal per (time, group).

    For every stored hyperparameter draw the factored covariance is
    assembled from (rho, G_t) and its diagonal extracted; the dense matrix
    is never formed.
    """
    rho_draws = store.draws("rho")
    if rho_draws.shape[0] == 0:
        raise ValueError("store holds no hyperparameter draws")
    year_draws = store.draws("year_covs")
    n_draws, nt = year_draws.shape[0], year_draws.shape[1]
    ng = rho_draws.shape[1]
    diags = np.empty((n_draws, nt, ng))
    for ell in range(n_draws):
        factor = assemble_sigma_eta(Ar1Spec(rho_draws[ell], nt), year_draws[ell])
        # diag of Rstar B Rstar': for cell (t,k), sum_{u<=t} L_k[t,u]^2 G_u[k,k]
        lsq = factor.chol_r ** 2                       # (ng, nt, nt)
        gdiag = np.diagonal(year_draws[ell], axis1=1, axis2=2)  # (nt, ng)
        diags[ell] = np.einsum("ktu,uk->tk", lsq, gdiag)
    lo, med, hi = np.percentile(diags, [2.5, 50.0, 97.5], axis=0)
    return {"median": med, "lower": lo, "upper": hi}


def age_standardized_rates(rates: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Standard-population weighted rate per (region, time) for one draw."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size != rates.shape[2]:
        raise ValueError("need one weight per group")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
    return rates @ weights


def suppression_flags(panel: CountPanel, threshold: int = 100,
                      reference_time: int = 0) -> np.ndarray:
    """Flag (region, group) cells with reference-year population below threshold.

    Flagging only; nothing is deleted, downstream consumers decide.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return panel.populations[:, reference_time, :] < threshold


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

SUMMARY_HEADER = "region,group,time,metric,median,lo95,hi95,suppressed"


def summary_rows(metric: str, index, median, lower, upper, suppressed,
                 group_axis: bool = False, time_axis: bool = False) -> list[str]:
    """Rows in the shared export schema; blank group/time when not applicable."""
    rows = []
    med = np.atleast_1d(median)
    for i, region in enumerate(index.region_labels):
        if group_axis and time_axis:
            for t, tl in enumerate(index.time_labels):
                for k, gl in enumerate(index.group_labels):
                    rows.append(f"{region},{gl},{tl},{metric},{med[i, t, k]:.10g},"
                                f"{lower[i, t, k]:.10g},{upper[i, t, k]:.10g},"
                                f"{int(suppressed[i, k])}")
        elif group_axis:
            for k, gl in enumerate(index.group_labels):
                rows.append(f"{region},{gl},,{metric},{med[i, k]:.10g},"
                            f"{lower[i, k]:.10g},{upper[i, k]:.10g},{int(suppressed[i, k])}")
        else:
            rows.append(f"{region},,,{metric},{med[i]:.10g},"
                        f"{lower[i]:.10g},{upper[i]:.10g},{int(suppressed[i])}")
    return rows


def write_summary(path: str | Path, rows: list[str]) -> None:
    atomic_write_text(Path(path), SUMMARY_HEADER + "\n" + "\n".join(rows) + "\n")


def trend_series(rates: RatePanelDraws, panel: CountPanel, region: int) -> dict:
    """Plot-ready series for one region: estimated, national, and the
    expected-at-national-decline trajectory, each with 95% bands."""
    draws = rates.draws
    pops = rates.populations
    nat = np.stack([national_rates(d, pops) for d in draws])        # (L, nt, ng)
    decline = (nat[:, :1, :] - nat) / nat[:, :1, :]
    expected = draws[:, region, 0, :][:, None, :] * (1.0 - decline)  # (L, nt, ng)
    own = draws[:, region, :, :]

    def q(x):
        lo, med, hi = np.percentile(x, [2.5, 50.0, 97.5], axis=0)
        return {"median": med.tolist(), "lower": lo.tolist(), "upper": hi.tolist()}

    return {
        "region": panel.index.region_labels[region],
        "groups": list(panel.index.group_labels),
        "times": list(panel.index.time_labels),
        "rate": q(own),
        "national": q(nat),
        "expected_at_national_decline": q(expected),
    }


def write_trend_series(path: str | Path, series: dict) -> None:
    atomic_write_text(Path(path), json.dumps(series, indent=2))
