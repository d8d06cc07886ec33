"""The nonseparable space-time covariance and its latent-field transforms.

The cross-sectional covariance over (time, group) cells factors as

    Sigma_eta = Rstar . blockdiag(G_1, ..., G_T) . Rstar'

where Rstar is block lower-triangular with (t, t') block equal to the
diagonal matrix of per-group AR(1) Cholesky entries.  Everything here works
on that factored form; the dense matrix is only materialized for small
problems and tests.

Canonical layout: time-outer / group-inner.  A vector over cells is stored
as an array with trailing shape (n_times, n_groups); position (t, k)
corresponds to flat index t * n_groups + k.  One explicit permutation
utility converts to the group-outer ordering some derivations use.

The latent field z on a region graph relates to the cell-level latents by

    z = sum_i  q_i  (x)  lambda_i^(-1/2) eta_i,      eta_i = Rstar v_i,

summing over the positive eigenpairs (lambda_i, q_i) of the graph
Laplacian, with v independent N(0, G_t) blocks per year.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .graph import GraphSpectrum, SpatialGraph
from .rng import RngStream

DENSE_SIZE_GUARD = 10_000


def ar1_correlation(rho: float, n_times: int) -> np.ndarray:
    """AR(1) correlation matrix with entry (t, t') = rho^|t - t'|."""
    if not abs(rho) < 1:
        raise ValueError(f"AR(1) correlation requires |rho| < 1, got {rho}")
    if n_times < 1:
        raise ValueError("n_times must be positive")
    lags = np.abs(np.arange(n_times)[:, None] - np.arange(n_times)[None, :])
    return np.asarray(rho, dtype=float) ** lags


def ar1_cholesky(rho: float, n_times: int) -> np.ndarray:
    """Closed-form lower Cholesky factor of the AR(1) correlation matrix.

    First column holds rho^t; below-diagonal entries in later columns are
    rho^(t - t') * sqrt(1 - rho^2), so no numerical factorization is needed.
    """
    if not abs(rho) < 1:
        raise ValueError(f"AR(1) Cholesky requires |rho| < 1, got {rho}")
    if n_times < 1:
        raise ValueError("n_times must be positive")
    t = np.arange(n_times)
    lower = np.zeros((n_times, n_times))
    lower[:, 0] = np.asarray(rho, dtype=float) ** t
    if n_times > 1:
        scale = np.sqrt(1.0 - rho * rho)
        lags = t[:, None] - t[None, 1:]
        with np.errstate(invalid="ignore"):
            vals = np.asarray(rho, dtype=float) ** np.where(lags >= 0, lags, 0)
        lower[:, 1:] = np.where(lags >= 0, vals * scale, 0.0)
    return lower


@dataclass(frozen=True)
class Ar1Spec:
    """Per-group AR(1) correlations over a common time axis."""

    rho: np.ndarray
    n_times: int

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "rho", rho)
        if rho.ndim != 1 or rho.size == 0:
            raise ValueError("rho must be a nonempty 1-d array")
        if not np.all(np.abs(rho) < 1):
            raise ValueError("all AR(1) correlations must satisfy |rho| < 1")
        if self.n_times < 1:
            raise ValueError("n_times must be positive")

    @property
    def n_groups(self) -> int:
        return self.rho.size


@dataclass(frozen=True)
class SigmaEtaFactor:
    """Factored form of the (n_times * n_groups) covariance.

    Holds the per-group AR(1) Cholesky factors and the per-year covariance
    Cholesky factors; all applications and solves go through these, the
    inverse is never formed.
    """

    rho: np.ndarray
    year_covs: np.ndarray          # (n_times, n_groups, n_groups)
    chol_r: np.ndarray = field(repr=False)   # (n_groups, n_times, n_times)
    chol_g: np.ndarray = field(repr=False)   # (n_times, n_groups, n_groups)
    layout: str = "time-outer/group-inner"

    @property
    def n_groups(self) -> int:
        return self.rho.size

    @property
    def n_times(self) -> int:
        return self.year_covs.shape[0]

    @property
    def n_cells(self) -> int:
        return self.n_times * self.n_groups

    def tri_block(self, t: int, t_prime: int) -> np.ndarray:
        """The (t, t') block of Rstar: diag over groups of AR(1) factor entries."""
        if t_prime > t:
            return np.zeros((self.n_groups, self.n_groups))
        return np.diag(self.chol_r[:, t, t_prime])

    # -- Rstar applications -------------------------------------------------
    def apply_rstar(self, x: np.ndarray) -> np.ndarray:
        """Rstar @ x for x with trailing shape (n_times, n_groups)."""
        return np.einsum("ktu,...uk->...tk", self.chol_r, np.asarray(x, dtype=float))

    def apply_rstar_t(self, x: np.ndarray) -> np.ndarray:
        """Rstar' @ x."""
        return np.einsum("kut,...uk->...tk", self.chol_r, np.asarray(x, dtype=float))

    def solve_rstar(self, x: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Rstar^-1 @ x (or Rstar^-T @ x), batched over leading axes."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n_times, self.n_groups)
        out = np.empty_like(flat)
        trans = "T" if transpose else "N"
        for k in range(self.n_groups):
            rhs = flat[:, :, k].T  # (n_times, batch)
            out[:, :, k] = solve_triangular(self.chol_r[k], rhs, lower=True,
                                            trans=trans, check_finite=False).T
        return out.reshape(x.shape)

    # -- full covariance ----------------------------------------------------
    def apply_year_covs(self, x: np.ndarray, inverse: bool = False) -> np.ndarray:
        """blockdiag(G_t) @ x, or its inverse via the cached Cholesky factors."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n_times, self.n_groups)
        out = np.empty_like(flat)
        for t in range(self.n_times):
            rhs = flat[:, t, :].T  # (n_groups, batch)
            if inverse:
                out[:, t, :] = cho_solve((self.chol_g[t], True), rhs,
                                         check_finite=False).T
            else:
                out[:, t, :] = (self.year_covs[t] @ rhs).T
        return out.reshape(x.shape)

    def sigma_apply(self, x: np.ndarray) -> np.ndarray:
        """Sigma_eta @ x."""
        return self.apply_rstar(self.apply_year_covs(self.apply_rstar_t(x)))

    def sigma_solve(self, x: np.ndarray) -> np.ndarray:
        """Sigma_eta^-1 @ x via two triangular solves and per-year solves."""
        u = self.solve_rstar(x)
        w = self.apply_year_covs(u, inverse=True)
        return self.solve_rstar(w, transpose=True)

    def log_det(self) -> float:
        """log |Sigma_eta|."""
        tri = 2.0 * float(np.sum(np.log(np.diagonal(self.chol_r, axis1=1, axis2=2))))
        year = 2.0 * float(np.sum(np.log(np.diagonal(self.chol_g, axis1=1, axis2=2))))
        return tri + year

    def rstar_dense(self) -> np.ndarray:
        """Dense Rstar in the canonical layout (tests and small problems)."""
        nt, ng = self.n_times, self.n_groups
        dense = np.zeros((nt * ng, nt * ng))
        for k in range(ng):
            dense[k::ng, k::ng] = self.chol_r[k]
        return dense


def assemble_sigma_eta(ar1: Ar1Spec, year_covs: np.ndarray) -> SigmaEtaFactor:
    """Build the factored covariance from AR(1) parameters and year covariances."""
    year_covs = np.asarray(year_covs, dtype=float)
    if year_covs.ndim != 3 or year_covs.shape[0] != ar1.n_times:
        raise ValueError(
            f"year_covs must have shape (n_times={ar1.n_times}, n_groups, n_groups)"
        )
    ng = ar1.n_groups
    if year_covs.shape[1:] != (ng, ng):
        raise ValueError(f"year covariances must be {ng}x{ng} to match the AR(1) spec")
    if not np.allclose(year_covs, np.swapaxes(year_covs, 1, 2), atol=1e-10):
        raise ValueError("year covariances must be symmetric")
    chol_g = np.empty_like(year_covs)
    for t in range(ar1.n_times):
        try:
            chol_g[t] = np.linalg.cholesky(year_covs[t])
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"year covariance G_{t + 1} is not positive definite") from exc
    chol_r = np.stack([ar1_cholesky(r, ar1.n_times) for r in ar1.rho])
    return SigmaEtaFactor(ar1.rho.copy(), year_covs.copy(), chol_r, chol_g)


def sigma_eta_dense(factor: SigmaEtaFactor) -> np.ndarray:
    """Materialize the dense covariance (guarded against large sizes)."""
    if factor.n_cells > DENSE_SIZE_GUARD:
        raise ValueError(
            f"dense covariance would have {factor.n_cells} rows, above the "
            f"{DENSE_SIZE_GUARD}-row guard"
        )
    rstar = factor.rstar_dense()
    block = np.zeros((factor.n_cells, factor.n_cells))
    ng = factor.n_groups
    for t in range(factor.n_times):
        block[t * ng:(t + 1) * ng, t * ng:(t + 1) * ng] = factor.year_covs[t]
    return rstar @ block @ rstar.T


def sigma_eta_solve(factor: SigmaEtaFactor, rhs: np.ndarray) -> np.ndarray:
    """Sigma_eta^-1 @ rhs for a flat vector/matrix or (..., n_times, n_groups) array."""
    rhs = np.asarray(rhs, dtype=float)
    cells = factor.n_cells
    if rhs.ndim >= 2 and rhs.shape[-2:] == (factor.n_times, factor.n_groups):
        return factor.sigma_solve(rhs)
    if rhs.ndim == 1:
        if rhs.shape[0] != cells:
            raise ValueError(f"rhs length {rhs.shape[0]} != {cells}")
        return factor.sigma_solve(rhs.reshape(factor.n_times, factor.n_groups)).ravel()
    if rhs.ndim == 2 and rhs.shape[0] == cells:
        cols = factor.sigma_solve(rhs.T.reshape(-1, factor.n_times, factor.n_groups))
        return cols.reshape(rhs.shape[1], cells).T
    raise ValueError(f"rhs shape {rhs.shape} incompatible with {cells} cells")


def permute_time_to_group(mat_or_vec: np.ndarray, n_times: int, n_groups: int) -> np.ndarray:
    """Reorder a flat vector or matrix from time-outer to group-outer layout."""
    perm = np.array([t * n_groups + k for k in range(n_groups) for t in range(n_times)])
    arr = np.asarray(mat_or_vec)
    if arr.ndim == 1:
        return arr[perm]
    if arr.ndim == 2:
        return arr[np.ix_(perm, perm)]
    raise ValueError("expected a flat vector or a square matrix")


# ---------------------------------------------------------------------------
# latent-field transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralLatents:
    """Per-eigenpair latents: eta rows and their year-whitened counterparts v."""

    eta: np.ndarray  # (n_positive, n_times, n_groups)
    v: np.ndarray | None = None


def icar_pairwise_quadratic(z: np.ndarray, factor: SigmaEtaFactor,
                            graph: SpatialGraph) -> float:
    """Sum over edges of (z_i - z_j)' Sigma_eta^-1 (z_i - z_j).

    Equals the Kronecker quadratic form z' {(D - W) (x) Sigma_eta^-1} z.
    Edge terms are accumulated in the graph's fixed edge order.
    """
    z = _check_field(z, factor, graph)
    ei, ej = graph.edge_arrays()
    if ei.size == 0:
        return 0.0
    diffs = z[ei] - z[ej]
    solved = factor.sigma_solve(diffs)
    return float(np.sum(diffs * solved))


def edge_scatter(z: np.ndarray, graph: SpatialGraph) -> np.ndarray:
    """The cell-level scatter z' (D - W) z as a dense (n_cells, n_cells) matrix.

    Identical to the scatter of the eta rows over positive eigenpairs, so
    hyperparameter updates can avoid the eigendecomposition entirely.
    """
    n_cells = z.shape[1] * z.shape[2]
    ei, ej = graph.edge_arrays()
    if ei.size == 0:
        return np.zeros((n_cells, n_cells))
    diffs = (z[ei] - z[ej]).reshape(ei.size, n_cells)
    return diffs.T @ diffs


def z_to_eta(z: np.ndarray, spectrum: GraphSpectrum, factor: SigmaEtaFactor,
             graph: SpatialGraph) -> SpectralLatents:
    """Recover the per-eigenpair latents from a field on the graph.

    eta_i = sqrt(lambda_i) * (q_i-weighted sum of region blocks); components
    of z in the Laplacian null space are projected away.
    """
    z = _check_field(z, factor, graph)
    n_regions = z.shape[0]
    flat = z.reshape(n_regions, -1)
    weights = spectrum.positive_eigenvectors.T @ flat  # (n_pos, n_cells)
    eta = np.sqrt(spectrum.positive_eigenvalues)[:, None] * weights
    eta = eta.reshape(-1, factor.n_times, factor.n_groups)
    return SpectralLatents(eta=eta)


def eta_to_v(latents: SpectralLatents, factor: SigmaEtaFactor) -> SpectralLatents:
    """Whiten the temporal structure: v = Rstar^-1 eta, grouped by year."""
    return SpectralLatents(eta=latents.eta, v=factor.solve_rstar(latents.eta))


def v_to_eta(v: np.ndarray, factor: SigmaEtaFactor) -> np.ndarray:
    return factor.apply_rstar(v)


def sample_mstcar_prior(factor: SigmaEtaFactor, spectrum: GraphSpectrum,
                        rng: RngStream) -> np.ndarray:
    """Draw a latent field from the intrinsic prior.

    v blocks are N(0, G_t) per year, mapped through Rstar and then onto the
    graph through the positive eigenpairs with lambda^(-1/2) scaling.  The
    result is orthogonal to each component's constant vector.
    """
    n_pos = spectrum.positive_eigenvalues.size
    nt, ng = factor.n_times, factor.n_groups
    gen = rng.generator()
    noise = gen.standard_normal((n_pos, nt, ng))
    v = np.einsum("tgh,ith->itg", factor.chol_g, noise)
    eta = factor.apply_rstar(v)
    scaled = eta.reshape(n_pos, nt * ng) / np.sqrt(spectrum.positive_eigenvalues)[:, None]
    field = spectrum.positive_eigenvectors @ scaled
    return field.reshape(-1, nt, ng)


def _check_field(z: np.ndarray, factor: SigmaEtaFactor, graph: SpatialGraph) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    expected = (graph.node_count, factor.n_times, factor.n_groups)
    if z.shape != expected:
        raise ValueError(f"latent field must have shape {expected}, got {z.shape}")
    return z
