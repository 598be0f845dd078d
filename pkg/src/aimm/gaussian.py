"""Dense multivariate Gaussian primitives.

All densities are handled in log space. A :class:`GaussianComponent` caches
its Cholesky factor, the inverse of that factor and the log normalising
constant so repeated evaluation is cheap.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NonPositiveDefinite, SymmetryViolation, TooFewPoints

LOG_2PI = float(np.log(2.0 * np.pi))
DEFAULT_JITTER = 1e-8
SYMMETRY_TOL = 1e-10
_JITTER_RETRIES = 3


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    mean: np.ndarray
    covariance: np.ndarray
    chol_lower: np.ndarray
    chol_inv: np.ndarray
    log_norm_const: float

    @property
    def dim(self):
        return self.mean.shape[0]

    def log_density(self, x):
        return log_density(self, x)

    def sample(self, rng, size=None):
        return sample(self, rng, size)


def _as_matrix(cov, d):
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape != (d, d):
        raise DimensionMismatch(f"covariance shape {cov.shape} does not match mean length {d}")
    return cov


def check_symmetric(cov):
    """Raise :class:`SymmetryViolation` unless ``cov`` is symmetric to 1e-10 (relative to its scale)."""
    asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if asym > SYMMETRY_TOL * scale:
        raise SymmetryViolation(f"covariance asymmetry {asym:.3g} exceeds tolerance")


def cholesky_with_jitter(cov, jitter=DEFAULT_JITTER):
    """Cholesky factor of ``cov``, adding diagonal jitter on failure.

    The first retry adds ``jitter * trace / d`` to the diagonal, each further
    retry multiplies the jitter by 10, for at most three retries.

    Returns
    -------
    (L, regularized_cov)
    """
    d = cov.shape[0]
    try:
        return np.linalg.cholesky(cov), cov
    except np.linalg.LinAlgError:
        pass
    if jitter > 0:
        base = np.trace(cov) / d
        if not np.isfinite(base) or base <= 0:
            base = 1.0
        eps = jitter
        for _ in range(_JITTER_RETRIES):
            reg = cov + (eps * base) * np.eye(d)
            try:
                return np.linalg.cholesky(reg), reg
            except np.linalg.LinAlgError:
                eps *= 10.0
    raise NonPositiveDefinite("covariance is not positive definite (jitter exhausted)")


def make_gaussian(mean, covariance, jitter=DEFAULT_JITTER):
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64)).copy()
    if mean.ndim != 1:
        raise DimensionMismatch("mean must be a vector")
    cov = _as_matrix(covariance, mean.shape[0])
    if not np.all(np.isfinite(cov)) or not np.all(np.isfinite(mean)):
        raise NonPositiveDefinite("non-finite mean or covariance")
    check_symmetric(cov)
    cov = 0.5 * (cov + cov.T)
    L, cov = cholesky_with_jitter(cov, jitter)
    if np.any(np.diag(L) <= 0):
        raise NonPositiveDefinite("covariance is not positive definite")
    d = mean.shape[0]
    L_inv = solve_triangular(L, np.eye(d), lower=True)
    log_norm = -0.5 * d * LOG_2PI - float(np.sum(np.log(np.diag(L))))
    for arr in (mean, cov, L, L_inv):
        arr.setflags(write=False)
    return GaussianComponent(mean, cov, L, L_inv, log_norm)


def _as_points(x, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.shape[-1] != d or pts.ndim != 2:
        raise DimensionMismatch(f"expected points of dimension {d}, got shape {x.shape}")
    return pts, single


def log_density(g, x):
    """Exact log-density; ``x`` is a single point or an ``(n, d)`` array."""
    pts, single = _as_points(x, g.dim)
    z = (pts - g.mean) @ g.chol_inv.T
    out = g.log_norm_const - 0.5 * np.einsum("ij,ij->i", z, z)
    return float(out[0]) if single else out


def sample(g, rng, size=None):
    if size is None:
        return g.mean + g.chol_lower @ rng.standard_normal(g.dim)
    z = rng.standard_normal((size, g.dim))
    return g.mean + z @ g.chol_lower.T


def _metric_chol_inv(metric, d):
    if isinstance(metric, GaussianComponent):
        L_inv = metric.chol_inv
    else:
        L_inv = make_gaussian(np.zeros(d), metric).chol_inv
    if L_inv.shape != (d, d):
        raise DimensionMismatch("metric dimension does not match points")
    return L_inv


def mahalanobis(x, y, metric):
    """``sqrt((x-y)^T S^-1 (x-y))`` where S is the covariance behind ``metric``
    (a :class:`GaussianComponent` or a covariance matrix)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch("points must be vectors of equal length")
    L_inv = _metric_chol_inv(metric, x.shape[0])
    z = L_inv @ (x - y)
    return float(np.sqrt(z @ z))


def empirical_covariance(points):
    """Unbiased sample covariance (divisor ``n - 1``) of the rows of ``points``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 2:
        raise TooFewPoints("empirical covariance needs at least two points")
    centred = pts - pts.mean(axis=0)
    cov = centred.T @ centred / (pts.shape[0] - 1)
    return 0.5 * (cov + cov.T)
