"""Distribution primitives with fixed parameterization conventions.

Conventions used throughout the package (the literature is not consistent,
so they are pinned here once):

* Gamma(shape ``a``, rate ``b``): mean ``a / b``.
* Inverse-Gamma(shape ``a``, scale ``b``): mean ``b / (a - 1)``.
* Wishart(scale ``S``, df ``nu``): mean ``nu * S``.
* Inverse-Wishart(scale ``Psi``, df ``nu``): mean ``Psi / (nu - p - 1)``.
* Normal parameterized by mean and variance.

All log-densities include their normalizing constants.  Evaluating at a
point outside the support returns ``-inf``; parameters outside their
support raise ``ValueError``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import betaln, gammaln, multigammaln

from .rng import RngStream

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class WishartParams:
    """Scale/df pair for a Wishart draw; mean is ``df * scale``."""

    scale: np.ndarray
    df: float

    def __post_init__(self):
        scale = np.asarray(self.scale, dtype=float)
        if scale.ndim != 2 or scale.shape[0] != scale.shape[1]:
            raise ValueError("Wishart scale must be a square matrix")
        np.linalg.cholesky(scale)  # raises LinAlgError when not SPD
        if self.df <= scale.shape[0] - 1:
            raise ValueError(
                f"Wishart df must exceed dim - 1 = {scale.shape[0] - 1}, got {self.df}"
            )


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_mvn_prec(precision: np.ndarray, shift: np.ndarray, rng: RngStream,
                    size: int | None = None) -> np.ndarray:
    """Draw from N(precision^-1 shift, precision^-1).

    Uses the Cholesky factor of the precision and a transposed triangular
    back-solve, never forming the dense covariance.
    """
    precision = np.asarray(precision, dtype=float)
    shift = np.asarray(shift, dtype=float)
    lower = np.linalg.cholesky(precision)
    mean = cho_solve((lower, True), shift)
    gen = rng.generator()
    if size is None:
        noise = gen.standard_normal(shift.shape[0])
        return mean + solve_triangular(lower, noise, lower=True, trans="T")
    noise = gen.standard_normal((shift.shape[0], size))
    draws = solve_triangular(lower, noise, lower=True, trans="T")
    return (mean[:, None] + draws).T


def _bartlett_factor(dim: int, df: float, gen: np.random.Generator) -> np.ndarray:
    """Lower-triangular Bartlett factor A with A A' ~ Wishart(I, df)."""
    a = np.zeros((dim, dim))
    chi_df = df - np.arange(dim)
    a[np.diag_indices(dim)] = np.sqrt(gen.chisquare(chi_df))
    if dim > 1:
        rows, cols = np.tril_indices(dim, k=-1)
        a[rows, cols] = gen.standard_normal(rows.size)
    return a


def wishart_draw(scale: np.ndarray, df: float, gen: np.random.Generator) -> np.ndarray:
    """Bartlett Wishart draw from an already-positioned generator."""
    lower = np.linalg.cholesky(np.asarray(scale, dtype=float))
    a = _bartlett_factor(lower.shape[0], df, gen)
    la = lower @ a
    return la @ la.T


def sample_wishart(params: WishartParams, rng: RngStream) -> np.ndarray:
    """Bartlett-decomposition Wishart draw with mean ``df * scale``."""
    return wishart_draw(params.scale, params.df, rng.generator())


def inv_wishart_draw(scale: np.ndarray, df: float, gen: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw from an already-positioned generator.

    With scale = L L', X = (L^-T A)(L^-T A)' ~ Wishart(scale^-1, df), so the
    returned draw is X^-1 = (L A^-T)(L A^-T)'.
    """
    scale = np.asarray(scale, dtype=float)
    dim = scale.shape[0]
    if df <= dim - 1:
        raise ValueError(f"inverse-Wishart df must exceed dim - 1 = {dim - 1}, got {df}")
    lower = np.linalg.cholesky(scale)
    a = _bartlett_factor(dim, df, gen)
    ainv_lt = solve_triangular(a, lower.T, lower=True, check_finite=False)  # A^-1 L'
    return ainv_lt.T @ ainv_lt


def sample_inv_wishart(scale: np.ndarray, df: float, rng: RngStream) -> np.ndarray:
    """Inverse-Wishart draw with mean ``scale / (df - dim - 1)``."""
    return inv_wishart_draw(scale, df, rng.generator())


def sample_gamma(shape: float | np.ndarray, rate: float | np.ndarray,
                 rng: RngStream, size=None) -> np.ndarray:
    """Gamma(shape, rate) draw with mean shape/rate."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise ValueError("gamma shape and rate must be positive")
    return rng.generator().gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_inv_gamma(shape: float | np.ndarray, scale: float | np.ndarray,
                     rng: RngStream, size=None) -> np.ndarray:
    """Inverse-Gamma(shape, scale) draw with mean scale/(shape-1)."""
    return 1.0 / sample_gamma(shape, scale, rng, size=size)


# ---------------------------------------------------------------------------
# log-densities
# ---------------------------------------------------------------------------

def normal_logpdf(x, mean, var):
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0):
        raise ValueError("normal variance must be positive")
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def gamma_logpdf(x, shape, rate):
    if shape <= 0 or rate <= 0:
        raise ValueError("gamma shape and rate must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(
        x > 0,
        shape * np.log(rate) - gammaln(shape)
        + (shape - 1) * np.log(np.where(x > 0, x, 1.0)) - rate * x,
        -np.inf,
    )
    return out if out.ndim else float(out)


def inv_gamma_logpdf(x, shape, scale):
    if shape <= 0 or scale <= 0:
        raise ValueError("inverse-gamma shape and scale must be positive")
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    out = np.where(
        x > 0,
        shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(safe) - scale / safe,
        -np.inf,
    )
    return out if out.ndim else float(out)


def beta_logpdf(x, a, b):
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    safe = np.where(inside, x, 0.5)
    out = np.where(
        inside,
        (a - 1) * np.log(safe) + (b - 1) * np.log1p(-safe) - betaln(a, b),
        -np.inf,
    )
    return out if out.ndim else float(out)


def poisson_logpmf(y, mean):
    """Log-mass of counts ``y`` with Poisson mean ``mean`` (zero mean allowed)."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if np.any(mean < 0):
        raise ValueError("Poisson mean must be nonnegative")
    valid = (y >= 0) & (y == np.floor(y))
    safe_y = np.where(valid, y, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        body = safe_y * np.log(mean) - mean - gammaln(safe_y + 1)
    # mean == 0 concentrates all mass at y == 0
    body = np.where(mean > 0, body, np.where(safe_y == 0, 0.0, -np.inf))
    out = np.where(valid, body, -np.inf)
    return out if out.ndim else float(out)


def _logdet_spd(x: np.ndarray) -> float:
    lower = np.linalg.cholesky(x)
    return 2.0 * float(np.sum(np.log(np.diag(lower))))


def wishart_logpdf(x: np.ndarray, scale: np.ndarray, df: float) -> float:
    """Wishart(scale, df) log-density; mean of the distribution is df*scale."""
    scale = np.asarray(scale, dtype=float)
    dim = scale.shape[0]
    if df <= dim - 1:
        raise ValueError("Wishart df must exceed dim - 1")
    logdet_scale = _logdet_spd(scale)
    x = np.asarray(x, dtype=float)
    try:
        logdet_x = _logdet_spd(x)
    except np.linalg.LinAlgError:
        return -np.inf
    trace_term = float(np.trace(np.linalg.solve(scale, x)))
    return (
        0.5 * (df - dim - 1) * logdet_x
        - 0.5 * trace_term
        - 0.5 * df * dim * np.log(2.0)
        - 0.5 * df * logdet_scale
        - multigammaln(df / 2.0, dim)
    )


def inv_wishart_logpdf(x: np.ndarray, scale: np.ndarray, df: float) -> float:
    """Inverse-Wishart(scale, df) log-density; mean is scale/(df-dim-1)."""
    scale = np.asarray(scale, dtype=float)
    dim = scale.shape[0]
    if df <= dim - 1:
        raise ValueError("inverse-Wishart df must exceed dim - 1")
    logdet_scale = _logdet_spd(scale)
    x = np.asarray(x, dtype=float)
    try:
        logdet_x = _logdet_spd(x)
    except np.linalg.LinAlgError:
        return -np.inf
    trace_term = float(np.trace(np.linalg.solve(x, scale)))
    return (
        0.5 * df * logdet_scale
        - 0.5 * (df + dim + 1) * logdet_x
        - 0.5 * trace_term
        - 0.5 * df * dim * np.log(2.0)
        - multigammaln(df / 2.0, dim)
    )
