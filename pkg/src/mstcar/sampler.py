"""Metropolis-within-Gibbs engine for the hierarchical count model.

One sweep updates, in fixed order: the cell-level log-rates theta
(random-walk Metropolis, embarrassingly parallel), the layer intercepts
beta (conjugate Gaussian), the latent spatial field z county block by
county block (conjugate Gaussian, followed by per-layer recentering with
the removed means absorbed into beta), the exchangeable variances tau^2
(conjugate inverse-Gamma), the per-year covariances G_t and their Wishart
hyper-scale G (conjugate, driven by the edge scatter of z pushed through
the temporal whitening), and finally the AR(1) correlations rho
(logit-scale Metropolis).

Randomness is drawn exclusively from counter-based streams keyed by
(update kind, iteration, chunk), so chains are bit-reproducible for any
thread count and can be resumed from a checkpoint without replaying.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.sparse import csr_matrix

from . import rng as rngmod
from .covariance import (
    Ar1Spec,
    SigmaEtaFactor,
    ar1_cholesky,
    assemble_sigma_eta,
    edge_scatter,
    sample_mstcar_prior,
)
from .distributions import (
    WishartParams,
    beta_logpdf,
    inv_wishart_draw,
    sample_inv_gamma,
    sample_inv_wishart,
    sample_wishart,
)
from .graph import GraphSpectrum, SpatialGraph
from .panel import CountPanel
from .rng import RngStream
from .store import SampleStore, load_checkpoint, save_checkpoint

LAYOUT_TAG = "time-outer/group-inner"
TARGET_ACCEPTANCE = 0.44


@dataclass(frozen=True)
class HyperParams:
    """Prior hyperparameters for the full hierarchy."""

    a_tau: float
    b_tau: float
    a_rho: float
    b_rho: float
    g0: np.ndarray
    nu0: float
    nu: float
    beta_prior_variance: float

    def __post_init__(self):
        object.__setattr__(self, "g0", np.asarray(self.g0, dtype=float))
        for name in ("a_tau", "b_tau", "a_rho", "b_rho", "nu0", "nu", "beta_prior_variance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        ng = self.g0.shape[0]
        if self.g0.shape != (ng, ng):
            raise ValueError("g0 must be square")
        np.linalg.cholesky(self.g0)
        if self.nu <= ng + 1:
            raise ValueError(f"nu must exceed n_groups + 1 = {ng + 1} for a finite G_t mean")
        if self.nu0 <= ng - 1:
            raise ValueError(f"nu0 must exceed n_groups - 1 = {ng - 1}")

    @property
    def n_groups(self) -> int:
        return self.g0.shape[0]

    @classmethod
    def default(cls, n_groups: int) -> "HyperParams":
        """Weakly informative defaults (all configurable)."""
        return cls(
            a_tau=3.0,
            b_tau=0.01,
            a_rho=9.0,
            b_rho=1.0,
            g0=0.01 * np.eye(n_groups),
            nu0=float(n_groups),
            nu=float(n_groups + 2),
            beta_prior_variance=1e8,
        )


@dataclass(frozen=True)
class ChainConfig:
    """Run-length, seeding, proposal and threading knobs for one chain."""

    n_iterations: int
    burn_in: int
    seed: int
    thin_theta: int = 10
    theta_proposal_scale: float = 0.5
    rho_proposal_scale: float = 0.5
    adaptation_window: int = 50
    epsilon_init: int = 0
    n_threads: int = 1
    theta_chunks: int = 64
    z_update_mode: str = "sequential"
    separable: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.n_iterations < 0 or self.burn_in < 0 or self.burn_in > self.n_iterations:
            raise ValueError("need 0 <= burn_in <= n_iterations")
        if self.thin_theta < 1:
            raise ValueError("thin_theta must be >= 1")
        if self.theta_proposal_scale <= 0 or self.rho_proposal_scale <= 0:
            raise ValueError("proposal scales must be positive")
        if self.adaptation_window < 0 or self.epsilon_init < 0:
            raise ValueError("adaptation_window and epsilon_init must be nonnegative")
        if self.n_threads < 1 or self.theta_chunks < 1:
            raise ValueError("n_threads and theta_chunks must be >= 1")
        if self.z_update_mode not in ("sequential", "chromatic"):
            raise ValueError(f"unknown z_update_mode {self.z_update_mode!r}")


@dataclass
class ModelState:
    """All sampler unknowns; arrays use the [region, time, group] layout."""

    beta: np.ndarray        # (n_times, n_groups)
    z: np.ndarray           # (n_regions, n_times, n_groups)
    theta: np.ndarray       # (n_regions, n_times, n_groups)
    tau2: np.ndarray        # (n_groups,)
    rho: np.ndarray         # (n_groups,)
    year_covs: np.ndarray   # (n_times, n_groups, n_groups)
    hyper_cov: np.ndarray   # (n_groups, n_groups)

    def validate(self) -> None:
        if np.any(self.tau2 <= 0):
            raise ValueError("tau2 must be positive")
        if np.any((self.rho <= 0) | (self.rho >= 1)):
            raise ValueError("rho must lie in (0, 1)")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        np.linalg.cholesky(self.hyper_cov)
        for t in range(self.year_covs.shape[0]):
            np.linalg.cholesky(self.year_covs[t])

    def copy(self) -> "ModelState":
        return ModelState(*(np.array(getattr(self, f)) for f in
                            ("beta", "z", "theta", "tau2", "rho", "year_covs", "hyper_cov")))

    def factor(self) -> SigmaEtaFactor:
        return assemble_sigma_eta(Ar1Spec(self.rho, self.year_covs.shape[0]), self.year_covs)


@dataclass(frozen=True)
class GraphWorkspace:
    """Precomputed graph structures shared across sweeps."""

    neighbor_lists: list
    adjacency: csr_matrix
    components: list
    colors: np.ndarray
    n_free: int  # node_count - n_components

    @classmethod
    def build(cls, graph: SpatialGraph) -> "GraphWorkspace":
        nbrs = graph.neighbor_lists()
        ei, ej = graph.edge_arrays()
        rows = np.concatenate([ei, ej])
        cols = np.concatenate([ej, ei])
        data = np.ones(rows.size)
        adjacency = csr_matrix((data, (rows, cols)),
                               shape=(graph.node_count, graph.node_count))
        comps = [np.flatnonzero(graph.component_labels == c)
                 for c in range(graph.n_components)]
        return cls(nbrs, adjacency, comps, graph.greedy_coloring(),
                   graph.node_count - graph.n_components)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_state(panel: CountPanel, cfg: ChainConfig, hp: HyperParams) -> ModelState:
    """Data-driven starting values.

    Cell log-rates start at log(Y/n) when Y exceeds the small-count cutoff,
    else at the layer's national log-rate; rho starts high (0.90) because a
    strong temporal correlation is expected a priori.
    """
    ns, nt, ng = panel.shape
    if hp.n_groups != ng:
        raise ValueError(f"hyperparameters are for {hp.n_groups} groups, panel has {ng}")
    tot_y, tot_n = panel.layer_totals()
    needs_national = panel.deaths <= cfg.epsilon_init
    dead_layers = (tot_y == 0) & needs_national.any(axis=0)
    if dead_layers.any():
        t, k = np.argwhere(dead_layers)[0]
        raise ValueError(
            f"layer time={panel.index.time_labels[t]} group={panel.index.group_labels[k]} "
            "has zero deaths everywhere; its national rate is zero and log-rate "
            "initialization is undefined"
        )
    if np.any(tot_y == 0):
        t, k = np.argwhere(tot_y == 0)[0]
        raise ValueError(
            f"layer time={panel.index.time_labels[t]} group={panel.index.group_labels[k]} "
            "has zero total deaths; per-layer intercept initialization is undefined"
        )
    national = np.log(tot_y / tot_n)  # (nt, ng)
    with np.errstate(divide="ignore", invalid="ignore"):
        crude = np.log(panel.deaths / panel.populations)
    theta0 = np.where(needs_national, national[None, :, :], crude)

    tau2_0 = hp.b_tau / (hp.a_tau - 1.0) if hp.a_tau > 1.0 else hp.b_tau
    small = 0.01 * np.eye(ng)
    return ModelState(
        beta=national.copy(),
        z=np.zeros((ns, nt, ng)),
        theta=theta0,
        tau2=np.full(ng, tau2_0),
        rho=np.full(ng, 0.90),
        year_covs=np.repeat(small[None], nt, axis=0),
        hyper_cov=small.copy(),
    )


# ---------------------------------------------------------------------------
# individual updates
# ---------------------------------------------------------------------------

def _chunk_slices(n_cells: int, n_chunks: int) -> list[slice]:
    bounds = np.linspace(0, n_cells, min(n_chunks, n_cells) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def update_theta(state: ModelState, panel: CountPanel, scales: np.ndarray,
                 stream: RngStream, n_threads: int = 1,
                 n_chunks: int = 64) -> np.ndarray:
    """Per-cell random-walk Metropolis on the log-rates.

    Targets Y*theta - n*exp(theta) - (theta - mu)^2 / (2 tau_k^2) with
    mu = beta_kt + Z_ikt; cells are independent given everything else, so
    chunks update in parallel.  Cells with zero population take an exact
    Gaussian draw from the prior term.  Returns per-cell acceptance flags.
    """
    shape = state.theta.shape
    mu = (state.beta[None, :, :] + state.z).reshape(-1)
    theta = state.theta.reshape(-1)
    y = panel.deaths.reshape(-1).astype(float)
    n = panel.populations.reshape(-1).astype(float)
    tau2 = np.broadcast_to(state.tau2, shape).reshape(-1)
    scale_flat = np.broadcast_to(scales, shape).reshape(-1)

    theta_new = np.empty_like(theta)
    accepted = np.empty(theta.shape, dtype=bool)
    slices = _chunk_slices(theta.size, n_chunks)

    def work(idx_slice_pair):
        idx, sl = idx_slice_pair
        gen = stream.substream(idx).generator()
        noise = gen.standard_normal(sl.stop - sl.start)
        logu = np.log(gen.random(sl.stop - sl.start))
        cur = theta[sl]
        prop = cur + scale_flat[sl] * noise
        with np.errstate(over="ignore"):
            delta = (
                y[sl] * (prop - cur)
                - n[sl] * (np.exp(prop) - np.exp(cur))
                - ((prop - mu[sl]) ** 2 - (cur - mu[sl]) ** 2) / (2.0 * tau2[sl])
            )
        acc = logu < delta
        out = np.where(acc, prop, cur)
        exact = n[sl] == 0
        if exact.any():
            out = np.where(exact, mu[sl] + np.sqrt(tau2[sl]) * noise, out)
            acc = acc | exact
        theta_new[sl] = out
        accepted[sl] = acc

    jobs = list(enumerate(slices))
    if n_threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, jobs))
    else:
        for job in jobs:
            work(job)

    state.theta = theta_new.reshape(shape)
    return accepted.reshape(shape)


def update_beta(state: ModelState, hp: HyperParams, stream: RngStream) -> None:
    """Conjugate Gaussian draw of the per-(time, group) intercepts."""
    if hp.beta_prior_variance <= 0:
        raise ValueError("beta prior variance must be positive")
    ns = state.z.shape[0]
    resid_mean = (state.theta - state.z).mean(axis=0)  # (nt, ng)
    prec = ns / state.tau2[None, :] + 1.0 / hp.beta_prior_variance
    mean = (ns * resid_mean / state.tau2[None, :]) / prec
    gen = stream.generator()
    state.beta = mean + gen.standard_normal(mean.shape) / np.sqrt(prec)


def _z_update_terms(state: ModelState, factor: SigmaEtaFactor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared pieces of the county-block conditional: Sigma_eta^-1 dense,
    the diagonal data precision, and the scaled residuals."""
    ns, nt, ng = state.z.shape
    cells = nt * ng
    sigma_inv = factor.sigma_solve(
        np.eye(cells).reshape(cells, nt, ng)).reshape(cells, cells).T
    tinv = np.broadcast_to(1.0 / state.tau2, (nt, ng)).reshape(-1)
    resid = (state.theta - state.beta[None, :, :]).reshape(ns, cells) * tinv[None, :]
    return sigma_inv, tinv, resid


def z_block_conditional(state: ModelState, graph: SpatialGraph,
                        factor: SigmaEtaFactor, site: int,
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of one county block's Gaussian full conditional.

    Built from the same precision/shift terms the sweep uses; exposed for
    oracle tests and diagnostics.
    """
    sigma_inv, tinv, resid = _z_update_terms(state, factor)
    nbrs = graph.neighbor_lists()[site]
    cells = sigma_inv.shape[0]
    z_flat = state.z.reshape(state.z.shape[0], cells)
    shift = resid[site].copy()
    if nbrs.size:
        shift += sigma_inv @ z_flat[nbrs].sum(axis=0)
    precision = graph.degrees[site] * sigma_inv + np.diag(tinv)
    cov = np.linalg.inv(precision)
    return cov @ shift, cov


def update_z_blocks(state: ModelState, graph: SpatialGraph, factor: SigmaEtaFactor,
                    stream: RngStream, workspace: GraphWorkspace | None = None,
                    mode: str = "sequential") -> None:
    """Gaussian county-block updates of the latent field, then recentering.

    Block i has precision m_i Sigma_eta^-1 + T^-1 and shift
    Sigma_eta^-1 (sum of neighbor blocks) + T^-1 (theta_i - X_i beta), with
    T diagonal holding tau_k^2.  Cholesky factors are cached per distinct
    degree.  After the sweep every (time, group) layer of z is recentered
    to mean zero per graph component and the removed means move into beta.
    """
    ws = workspace if workspace is not None else GraphWorkspace.build(graph)
    ns, nt, ng = state.z.shape
    cells = nt * ng
    sigma_inv, tinv, resid = _z_update_terms(state, factor)
    chol_by_degree = {
        int(m): np.linalg.cholesky(m * sigma_inv + np.diag(tinv))
        for m in np.unique(graph.degrees)
    }
    noise = stream.generator().standard_normal((ns, cells))
    z_flat = state.z.reshape(ns, cells)

    if mode == "sequential":
        for i in range(ns):
            nbrs = ws.neighbor_lists[i]
            shift = resid[i].copy()
            if nbrs.size:
                shift += sigma_inv @ z_flat[nbrs].sum(axis=0)
            lower = chol_by_degree[int(graph.degrees[i])]
            mean = cho_solve((lower, True), shift, check_finite=False)
            z_flat[i] = mean + solve_triangular(lower, noise[i], lower=True,
                                                trans="T", check_finite=False)
    elif mode == "chromatic":
        # same-color counties are mutually non-adjacent, so they update as a
        # batch against the current values of all other colors
        for color in range(int(ws.colors.max()) + 1):
            members = np.flatnonzero(ws.colors == color)
            nbr_sums = ws.adjacency[members] @ z_flat
            shifts = resid[members] + nbr_sums @ sigma_inv.T
            member_degrees = graph.degrees[members]
            for m in np.unique(member_degrees):
                mask = member_degrees == m
                rows = members[mask]
                lower = chol_by_degree[int(m)]
                mean = cho_solve((lower, True), shifts[mask].T, check_finite=False)
                z_flat[rows] = (mean + solve_triangular(
                    lower, noise[rows].T, lower=True, trans="T",
                    check_finite=False)).T
    else:
        raise ValueError(f"unknown z update mode {mode!r}")

    state.z = z_flat.reshape(ns, nt, ng)
    _recenter(state, ws)


def _recenter(state: ModelState, ws: GraphWorkspace) -> None:
    ns = state.z.shape[0]
    absorbed = np.zeros_like(state.beta)
    for nodes in ws.components:
        mean = state.z[nodes].mean(axis=0)
        state.z[nodes] -= mean[None, :, :]
        absorbed += (nodes.size / ns) * mean
    state.beta = state.beta + absorbed


def update_tau2(state: ModelState, hp: HyperParams, stream: RngStream) -> None:
    """Conjugate inverse-Gamma update of the per-group exchangeable variances."""
    ns, nt, _ = state.theta.shape
    resid = state.theta - state.beta[None, :, :] - state.z
    ssq = np.sum(resid ** 2, axis=(0, 1))  # (ng,)
    shape = hp.a_tau + 0.5 * ns * nt
    gen = stream.generator()
    state.tau2 = 1.0 / gen.gamma(shape, 1.0 / (hp.b_tau + 0.5 * ssq))


def _solve_rstar_matrix(factor: SigmaEtaFactor, mat: np.ndarray) -> np.ndarray:
    """Rstar^-1 @ mat for a square cell-level matrix."""
    cells = factor.n_cells
    cols = factor.solve_rstar(mat.T.reshape(cells, factor.n_times, factor.n_groups))
    return cols.reshape(cells, cells).T


def v_scatter(factor: SigmaEtaFactor, eta_scatter: np.ndarray) -> np.ndarray:
    """Whitened scatter Rstar^-1 H Rstar^-T from the eta scatter H."""
    half = _solve_rstar_matrix(factor, eta_scatter)
    return _solve_rstar_matrix(factor, half.T)


def year_scatter_blocks(factor: SigmaEtaFactor, eta_scatter: np.ndarray) -> np.ndarray:
    """Per-year N_g x N_g scatter of the whitened latents v."""
    full = v_scatter(factor, eta_scatter)
    ng = factor.n_groups
    return np.stack([
        full[t * ng:(t + 1) * ng, t * ng:(t + 1) * ng]
        for t in range(factor.n_times)
    ])


def update_year_covs(state: ModelState, s_blocks: np.ndarray, hp: HyperParams,
                     stream: RngStream, n_free: int, separable: bool = False) -> None:
    """Conjugate inverse-Wishart updates of the per-year covariances.

    In separable mode the per-year scatters pool into one shared draw.
    """
    nt = state.year_covs.shape[0]
    if separable:
        pooled = sample_inv_wishart(
            state.hyper_cov + s_blocks.sum(axis=0), hp.nu + nt * n_free, stream)
        state.year_covs = np.repeat(pooled[None], nt, axis=0)
        return
    gen = stream.generator()
    state.year_covs = np.stack([
        inv_wishart_draw(state.hyper_cov + s_blocks[t], hp.nu + n_free, gen)
        for t in range(nt)
    ])


def update_hyper_cov(state: ModelState, hp: HyperParams, stream: RngStream,
                     separable: bool = False) -> None:
    """Conjugate Wishart update of the covariance hyper-scale."""
    g0_inv = np.linalg.inv(hp.g0)
    if separable:
        scale = np.linalg.inv(g0_inv + np.linalg.inv(state.year_covs[0]))
        df = hp.nu0 + hp.nu
    else:
        inv_sum = sum(np.linalg.inv(gt) for gt in state.year_covs)
        scale = np.linalg.inv(g0_inv + inv_sum)
        df = hp.nu0 + state.year_covs.shape[0] * hp.nu
    scale = 0.5 * (scale + scale.T)
    state.hyper_cov = sample_wishart(WishartParams(scale, df), stream)


def _rho_loglik(eta_scatter: np.ndarray, rho: np.ndarray, chol_g: np.ndarray,
                n_times: int, n_free: int) -> float:
    """Latent-field log-likelihood terms that involve the AR(1) correlations.

    Equals -n_free * sum_k log|Rtilde_k| - 0.5 sum_t tr(G_t^-1 S_t(rho)).
    """
    ng = rho.size
    if n_times == 1:
        return 0.0  # single year: neither term depends on rho
    # only the Rstar solves of this factor are used; year_covs is a placeholder
    factor = SigmaEtaFactor(
        rho=rho,
        year_covs=np.zeros((n_times, ng, ng)),
        chol_r=np.stack([ar1_cholesky(r, n_times) for r in rho]),
        chol_g=chol_g,
    )
    blocks = year_scatter_blocks(factor, eta_scatter)
    quad = sum(
        float(np.trace(cho_solve((chol_g[t], True), blocks[t], check_finite=False)))
        for t in range(n_times)
    )
    logdet = 0.5 * (n_times - 1) * float(np.sum(np.log1p(-rho ** 2)))
    return -n_free * logdet - 0.5 * quad


def update_rho(state: ModelState, eta_scatter: np.ndarray, hp: HyperParams,
               scales: np.ndarray, stream: RngStream, n_free: int,
               separable: bool = False) -> np.ndarray:
    """Logit-scale random-walk Metropolis on the AR(1) correlations.

    The target combines the Beta prior, the latent Gaussian terms through
    the whitened scatter, and the logit-transform Jacobian.  Returns
    per-group acceptance flags (one shared flag in separable mode).
    """
    nt = state.year_covs.shape[0]
    ng = state.rho.size
    chol_g = np.stack([np.linalg.cholesky(g) for g in state.year_covs])
    gen = stream.generator()
    accepted = np.zeros(ng, dtype=bool)

    def log_target(rho_vec: np.ndarray, prior_rho: float) -> float:
        prior = float(beta_logpdf(prior_rho, hp.a_rho, hp.b_rho))
        jac = math.log(prior_rho) + math.log1p(-prior_rho)
        return prior + jac + _rho_loglik(eta_scatter, rho_vec, chol_g, nt, n_free)

    if separable:
        current = state.rho[0]
        logit = math.log(current / (1.0 - current))
        proposal = 1.0 / (1.0 + math.exp(-(logit + scales[0] * gen.standard_normal())))
        if not 0.0 < proposal < 1.0:
            return accepted  # saturated in floating point; keep current
        delta = (log_target(np.full(ng, proposal), np.array([proposal]))
                 - log_target(state.rho, np.array([current])))
        if math.log(gen.random()) < delta:
            state.rho = np.full(ng, proposal)
            accepted[:] = True
        return accepted

    for k in range(ng):
        current = state.rho[k]
        logit = math.log(current / (1.0 - current))
        proposal = 1.0 / (1.0 + math.exp(-(logit + scales[k] * gen.standard_normal())))
        if not 0.0 < proposal < 1.0:
            continue  # proposal saturated in floating point: zero prior density
        cand = state.rho.copy()
        cand[k] = proposal
        delta = (log_target(cand, np.array([proposal]))
                 - log_target(state.rho, np.array([current])))
        if math.log(gen.random()) < delta:
            state.rho = cand
            accepted[k] = True
    return accepted


def adapt_proposals(scales: np.ndarray, tallies: np.ndarray, window: int,
                    target: float = TARGET_ACCEPTANCE, rate: float = 1.0,
                    bounds: tuple[float, float] = (1e-6, 1e6)) -> np.ndarray:
    """Multiplicative scale adjustment toward the target acceptance rate.

    At the target the scale is unchanged; all-rejected windows shrink it by
    exp(-rate * target), all-accepted windows grow it by
    exp(rate * (1 - target)).
    """
    if window <= 0:
        raise ValueError("adaptation window must be positive")
    rates = tallies / float(window)
    new = scales * np.exp(rate * (rates - target))
    return np.clip(new, bounds[0], bounds[1])


# ---------------------------------------------------------------------------
# full sweeps and the chain driver
# ---------------------------------------------------------------------------

def gibbs_sweep(state: ModelState, panel: CountPanel, graph: SpatialGraph,
                ws: GraphWorkspace, hp: HyperParams, cfg: ChainConfig,
                iteration: int, theta_scales: np.ndarray,
                rho_scales: np.ndarray, base: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """One full Gibbs sweep in the fixed update order; mutates ``state``."""
    theta_acc = update_theta(
        state, panel, theta_scales,
        base.substream(rngmod.KIND_THETA, iteration),
        n_threads=cfg.n_threads, n_chunks=cfg.theta_chunks)
    update_beta(state, hp, base.substream(rngmod.KIND_BETA, iteration))
    factor = state.factor()
    update_z_blocks(state, graph, factor,
                    base.substream(rngmod.KIND_Z, iteration),
                    workspace=ws, mode=cfg.z_update_mode)
    update_tau2(state, hp, base.substream(rngmod.KIND_TAU2, iteration))
    eta_scatter = edge_scatter(state.z, graph)
    s_blocks = year_scatter_blocks(factor, eta_scatter)
    update_year_covs(state, s_blocks, hp,
                     base.substream(rngmod.KIND_YEAR_COV, iteration),
                     ws.n_free, separable=cfg.separable)
    update_hyper_cov(state, hp, base.substream(rngmod.KIND_HYPER_COV, iteration),
                     separable=cfg.separable)
    rho_acc = update_rho(state, eta_scatter, hp, rho_scales,
                         base.substream(rngmod.KIND_RHO, iteration),
                         ws.n_free, separable=cfg.separable)
    return theta_acc, rho_acc


def run_chain(panel: CountPanel, graph: SpatialGraph, hp: HyperParams,
              cfg: ChainConfig, store_dir: str | Path | None = None,
              checkpoint_path: str | Path | None = None,
              resume: bool = False) -> SampleStore:
    """Run the Metropolis-within-Gibbs chain and collect a sample store.

    theta draws are stored post burn-in at the thinned cadence,
    hyperparameters at every post-burn-in iteration.  With a checkpoint
    path the chain snapshots every ``cfg.checkpoint_every`` iterations (and
    on failure) and can resume bit-exactly.
    """
    if graph.node_count != panel.shape[0]:
        raise ValueError("graph and panel disagree on the number of regions")
    ns, nt, ng = panel.shape
    ws = GraphWorkspace.build(graph)
    base = RngStream(cfg.seed)

    meta = {
        "seed": cfg.seed,
        "burn_in": cfg.burn_in,
        "thin_theta": cfg.thin_theta,
        "n_iterations": cfg.n_iterations,
        "mode": "separable" if cfg.separable else "nonseparable",
        "dims": {"n_regions": ns, "n_groups": ng, "n_times": nt},
        "layout": LAYOUT_TAG,
        "labels": {
            "regions": list(panel.index.region_labels),
            "groups": list(panel.index.group_labels),
            "times": list(panel.index.time_labels),
        },
    }

    start_iteration = 0
    if resume:
        if checkpoint_path is None or not Path(checkpoint_path).exists():
            raise FileNotFoundError("resume requested but no checkpoint file found")
        snap = load_checkpoint(checkpoint_path)
        arrays = snap["arrays"]
        state = ModelState(
            beta=arrays["beta"].reshape(nt, ng),
            z=arrays["z"].reshape(ns, nt, ng),
            theta=arrays["theta"].reshape(ns, nt, ng),
            tau2=arrays["tau2"],
            rho=arrays["rho"],
            year_covs=arrays["year_covs"].reshape(nt, ng, ng),
            hyper_cov=arrays["hyper_cov"].reshape(ng, ng),
        )
        theta_scales = arrays["theta_scales"].reshape(ns, nt, ng)
        rho_scales = arrays["rho_scales"]
        theta_tallies = arrays["theta_tallies"].reshape(ns, nt, ng)
        rho_tallies = arrays["rho_tallies"]
        window_fill = int(arrays["window_fill"][0])
        start_iteration = snap["iteration"] + 1
        if store_dir is not None and Path(store_dir, "manifest.json").exists():
            store = SampleStore.load(store_dir)
            store.truncate_to_iteration(snap["iteration"])
        else:
            store = SampleStore(meta)
    else:
        state = init_state(panel, cfg, hp)
        theta_scales = np.full((ns, nt, ng), cfg.theta_proposal_scale)
        rho_scales = np.full(ng, cfg.rho_proposal_scale)
        theta_tallies = np.zeros((ns, nt, ng))
        rho_tallies = np.zeros(ng)
        window_fill = 0
        store = SampleStore(meta)

    def snapshot(iteration: int) -> None:
        if checkpoint_path is None:
            return
        save_checkpoint(
            checkpoint_path,
            iteration=iteration,
            layout=LAYOUT_TAG,
            dims=meta["dims"],
            arrays={
                "beta": state.beta, "z": state.z, "theta": state.theta,
                "tau2": state.tau2, "rho": state.rho,
                "year_covs": state.year_covs, "hyper_cov": state.hyper_cov,
                "theta_scales": theta_scales, "rho_scales": rho_scales,
                "theta_tallies": theta_tallies, "rho_tallies": rho_tallies,
                "window_fill": np.array([window_fill], dtype=float),
            },
        )

    iteration = start_iteration
    try:
        for iteration in range(start_iteration, cfg.n_iterations):
            theta_acc, rho_acc = gibbs_sweep(
                state, panel, graph, ws, hp, cfg, iteration,
                theta_scales, rho_scales, base)
            store.record_acceptance(float(theta_acc.mean()), rho_acc)

            in_burn_in = iteration < cfg.burn_in
            if in_burn_in and cfg.adaptation_window > 0:
                theta_tallies += theta_acc
                rho_tallies += rho_acc
                window_fill += 1
                if window_fill == cfg.adaptation_window:
                    theta_scales = adapt_proposals(
                        theta_scales, theta_tallies, cfg.adaptation_window)
                    rho_scales = adapt_proposals(
                        rho_scales, rho_tallies, cfg.adaptation_window)
                    theta_tallies[:] = 0.0
                    rho_tallies[:] = 0.0
                    window_fill = 0

            if not in_burn_in:
                store.append_hyper(iteration, state.beta, state.tau2, state.rho,
                                   state.year_covs, state.hyper_cov)
                if (iteration - cfg.burn_in) % cfg.thin_theta == 0:
                    store.append_theta(iteration, state.theta)

            if (cfg.checkpoint_every > 0
                    and (iteration + 1) % cfg.checkpoint_every == 0):
                if store_dir is not None:
                    store.save(store_dir)
                snapshot(iteration)
    except Exception:
        snapshot(iteration)
        raise

    if store_dir is not None:
        store.save(store_dir)
    if checkpoint_path is not None and cfg.n_iterations > start_iteration:
        snapshot(cfg.n_iterations - 1)
    return store


# ---------------------------------------------------------------------------
# prior simulation (forward model; also drives calibration tests)
# ---------------------------------------------------------------------------

def prior_draw(shape: tuple[int, int, int], graph: SpatialGraph,
               spectrum: GraphSpectrum, hp: HyperParams, stream: RngStream,
               separable: bool = False) -> ModelState:
    """Draw a full model state from the prior hierarchy.

    Requires the graph spectrum (prior simulation is the one place the
    eigendecomposition is genuinely needed).
    """
    ns, nt, ng = shape
    hyper_cov = sample_wishart(WishartParams(hp.g0, hp.nu0), stream.substream(0))
    if separable:
        shared = sample_inv_wishart(hyper_cov, hp.nu, stream.substream(1))
        year_covs = np.repeat(shared[None], nt, axis=0)
        rho_val = stream.substream(2).generator().beta(hp.a_rho, hp.b_rho)
        rho = np.full(ng, rho_val)
    else:
        year_covs = np.stack([
            sample_inv_wishart(hyper_cov, hp.nu, stream.substream(1, t))
            for t in range(nt)
        ])
        rho = stream.substream(2).generator().beta(hp.a_rho, hp.b_rho, size=ng)
    tau2 = np.asarray(sample_inv_gamma(
        np.full(ng, hp.a_tau), np.full(ng, hp.b_tau), stream.substream(3)))
    factor = assemble_sigma_eta(Ar1Spec(rho, nt), year_covs)
    z = sample_mstcar_prior(factor, spectrum, stream.substream(4))
    gen = stream.substream(5).generator()
    beta = gen.standard_normal((nt, ng)) * math.sqrt(hp.beta_prior_variance)
    theta = beta[None, :, :] + z + gen.standard_normal((ns, nt, ng)) * np.sqrt(tau2)
    return ModelState(beta=beta, z=z, theta=theta, tau2=tau2, rho=rho,
                      year_covs=year_covs, hyper_cov=hyper_cov)
