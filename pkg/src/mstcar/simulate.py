"""Forward simulator: synthetic count panels from the generative model.

Generates a latent field from the intrinsic prior on a lattice (or a
user-supplied edge list), adds per-layer intercepts and exchangeable
noise, and draws Poisson counts.  Writes the panel, the adjacency and a
truth file of rates for recovery scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import Ar1Spec, assemble_sigma_eta, sample_mstcar_prior
from .graph import SpatialGraph, graph_spectrum, lattice_graph, load_adjacency
from .panel import CountPanel, PanelIndex, dump_count_panel
from .rng import KIND_SIMULATE, RngStream
from .store import atomic_write_text


@dataclass(frozen=True)
class SimSpec:
    """Truth values and sizes for one synthetic panel."""

    rows: int
    cols: int
    n_groups: int
    n_times: int
    seed: int
    rho: np.ndarray                 # (n_groups,)
    tau2: np.ndarray                # (n_groups,)
    year_covs: np.ndarray           # (n_times, n_groups, n_groups)
    baseline_log_rates: np.ndarray  # (n_times, n_groups)
    population_range: tuple[int, int] = (200, 2000)
    adjacency_path: str | None = None  # replaces the lattice when given

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "tau2", np.asarray(self.tau2, dtype=float))
        object.__setattr__(self, "year_covs", np.asarray(self.year_covs, dtype=float))
        object.__setattr__(self, "baseline_log_rates",
                           np.asarray(self.baseline_log_rates, dtype=float))
        if self.adjacency_path is None and (self.rows < 1 or self.cols < 1):
            raise ValueError("lattice dimensions must be positive")
        if self.n_groups < 1 or self.n_times < 1:
            raise ValueError("group and time counts must be positive")
        if self.rho.shape != (self.n_groups,) or self.tau2.shape != (self.n_groups,):
            raise ValueError("rho and tau2 must have one entry per group")
        if np.any(self.tau2 <= 0):
            raise ValueError("tau2 must be positive")
        if self.year_covs.shape != (self.n_times, self.n_groups, self.n_groups):
            raise ValueError("year_covs must be (n_times, n_groups, n_groups)")
        if self.baseline_log_rates.shape != (self.n_times, self.n_groups):
            raise ValueError("baseline_log_rates must be (n_times, n_groups)")
        lo, hi = self.population_range
        if lo < 0 or hi < lo:
            raise ValueError("population range must satisfy 0 <= lo <= hi")


def uniform_year_covs(n_times: int, n_groups: int, variance: float,
                      cross_corr: float = 0.0) -> np.ndarray:
    """Constant-in-time exchangeable year covariances for simple specs."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    if not -1.0 / max(n_groups - 1, 1) < cross_corr < 1.0:
        raise ValueError("cross correlation outside the positive-definite range")
    base = variance * ((1 - cross_corr) * np.eye(n_groups)
                       + cross_corr * np.ones((n_groups, n_groups)))
    return np.repeat(base[None], n_times, axis=0)


@dataclass(frozen=True)
class SimulationResult:
    panel: CountPanel
    graph: SpatialGraph
    truth_rates: np.ndarray  # (n_regions, n_times, n_groups)
    truth: dict


def simulate_panel(spec: SimSpec) -> SimulationResult:
    """Draw one panel from the generative model.

    Rare pathological draws where a Poisson count exceeds the population
    are rejected with an error (the rate specification is too hot for a
    count panel) rather than clipped, which would distort the truth file.
    """
    if spec.adjacency_path is not None:
        text = Path(spec.adjacency_path).read_text().splitlines()
        labels = _labels_from_edge_list(text)
        graph = load_adjacency(text, labels)
    else:
        graph, labels = lattice_graph(spec.rows, spec.cols)
    ns = graph.node_count
    nt, ng = spec.n_times, spec.n_groups

    base = RngStream(spec.seed).substream(KIND_SIMULATE)
    factor = assemble_sigma_eta(Ar1Spec(spec.rho, nt), spec.year_covs)
    spectrum = graph_spectrum(graph, size_cap=max(ns, 2))
    z = sample_mstcar_prior(factor, spectrum, base.substream(0))

    gen = base.substream(1).generator()
    lo, hi = spec.population_range
    pops_ik = gen.integers(lo, hi + 1, size=(ns, ng))
    pops = np.repeat(pops_ik[:, None, :], nt, axis=1)

    theta = (spec.baseline_log_rates[None, :, :] + z
             + gen.standard_normal((ns, nt, ng)) * np.sqrt(spec.tau2))
    rates = np.exp(theta)
    deaths = gen.poisson(pops * rates)
    if np.any(deaths > pops):
        raise ValueError(
            "simulated deaths exceed population; lower the baseline rates or "
            "variances, or raise the population range")

    index = PanelIndex(
        tuple(labels),
        tuple(f"g{k + 1}" for k in range(ng)),
        tuple(f"t{t + 1}" for t in range(nt)),
    )
    panel = CountPanel(index, deaths, pops)
    truth = {
        "seed": spec.seed,
        "rho": spec.rho.tolist(),
        "tau2": spec.tau2.tolist(),
        "year_covs": spec.year_covs.tolist(),
        "baseline_log_rates": spec.baseline_log_rates.tolist(),
    }
    return SimulationResult(panel=panel, graph=graph, truth_rates=rates, truth=truth)


def _labels_from_edge_list(lines) -> list[str]:
    labels: list[str] = []
    seen = set()
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for token in line.split()[:2]:
            if token not in seen:
                seen.add(token)
                labels.append(token)
    return labels


def write_simulation(result: SimulationResult, out_dir: str | Path) -> dict[str, Path]:
    """Write counts, adjacency, truth rates and the truth manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "counts": out / "counts.csv",
        "adjacency": out / "adjacency.txt",
        "truth_rates": out / "truth_rates.csv",
        "truth": out / "truth.json",
    }
    atomic_write_text(paths["counts"], dump_count_panel(result.panel))
    idx = result.panel.index
    edge_lines = [f"{idx.region_labels[i]} {idx.region_labels[j]}"
                  for i, j in result.graph.edges]
    atomic_write_text(paths["adjacency"], "\n".join(edge_lines) + "\n")
    rows = ["region,group,time,rate"]
    for i, region in enumerate(idx.region_labels):
        for k, group in enumerate(idx.group_labels):
            for t, time in enumerate(idx.time_labels):
                rows.append(f"{region},{group},{time},{result.truth_rates[i, t, k]:.12g}")
    atomic_write_text(paths["truth_rates"], "\n".join(rows) + "\n")
    atomic_write_text(paths["truth"], json.dumps(result.truth, indent=2))
    return paths
