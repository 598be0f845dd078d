"""Benchmark target densities.

Every target exposes a log-density that accepts either one point of shape
``(d,)`` (returning a float) or a batch of shape ``(n, d)`` (returning an
array), plus an exact sampler where one exists.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DimensionMismatch, NonPositiveDefinite, SingularInput
from .gaussian import make_gaussian

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TargetDensity:
    """An evaluable (possibly unnormalized) log-density on R^d."""

    name: str
    dim: int
    batch_log_density: Callable[[np.ndarray], np.ndarray]
    exact_sampler: Optional[Callable] = None
    normalized: bool = True
    params: dict = field(default_factory=dict)

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim <= 1:
            pts = x.reshape(1, -1)
            if pts.shape[1] != self.dim:
                raise DimensionMismatch(f"{self.name}: expected dimension {self.dim}, got {pts.shape[1]}")
            return float(self.batch_log_density(pts)[0])
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionMismatch(f"{self.name}: expected (n, {self.dim}) points, got {x.shape}")
        return self.batch_log_density(x)

    __call__ = log_density

    def sample(self, rng, size):
        """``size`` exact draws as an ``(size, d)`` array."""
        if self.exact_sampler is None:
            raise NotImplementedError(f"target {self.name!r} has no exact sampler")
        return self.exact_sampler(rng, size)


# trimodal toy example --------------------------------------------------------

TRIMODAL_WEIGHTS = np.array([0.25, 0.5, 0.25])
TRIMODAL_MEANS = np.array([-10.0, 0.0, 10.0])
TRIMODAL_VARIANCES = np.array([1.0, 0.1, 1.0])


def make_trimodal_1d():
    """0.25 N(-10, 1) + 0.5 N(0, 0.1) + 0.25 N(10, 1); second parameters are variances."""
    log_coef = np.log(TRIMODAL_WEIGHTS) - 0.5 * (LOG_2PI + np.log(TRIMODAL_VARIANCES))

    def logpdf(x):
        r = x[:, :1] - TRIMODAL_MEANS[None, :]
        return logsumexp(log_coef - 0.5 * r * r / TRIMODAL_VARIANCES, axis=1)

    def sampler(rng, size):
        k = rng.choice(3, size=size, p=TRIMODAL_WEIGHTS)
        z = rng.standard_normal(size)
        return (TRIMODAL_MEANS[k] + np.sqrt(TRIMODAL_VARIANCES[k]) * z).reshape(-1, 1)

    return TargetDensity("trimodal_1d", 1, logpdf, sampler, True, {})


# banana ------------------------------------------------------------------------

@dataclass(frozen=True)
class BananaParams:
    b: float = 0.1
    d: int = 2

    def __post_init__(self):
        if self.d < 2:
            raise DimensionMismatch("banana target needs d >= 2")

    @property
    def m(self):
        return np.zeros(self.d)

    @property
    def S_diag(self):
        s = np.ones(self.d)
        s[0] = 100.0
        return s


def banana_map(x, b):
    """Twist the second coordinate: ``x2 + b*x1**2 - 100*b``; works row-wise on batches."""
    x = np.array(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise DimensionMismatch("banana map needs at least two coordinates")
    x[..., 1] = x[..., 1] + b * x[..., 0] ** 2 - 100.0 * b
    return x


def banana_inverse_map(y, b):
    y = np.array(y, dtype=np.float64)
    y[..., 1] = y[..., 1] - b * y[..., 0] ** 2 + 100.0 * b
    return y


def make_banana(p=None):
    p = p or BananaParams()
    s = p.S_diag
    b = p.b
    const = -0.5 * p.d * LOG_2PI - 0.5 * float(np.sum(np.log(s)))
    inv_s = 1.0 / s

    def logpdf(x):
        y = x.copy()
        y[:, 1] += b * x[:, 0] ** 2 - 100.0 * b
        return const - 0.5 * (y * y) @ inv_s

    def sampler(rng, size):
        z = rng.standard_normal((size, p.d)) * np.sqrt(s)
        return banana_inverse_map(z, b)

    return TargetDensity("banana", p.d, logpdf, sampler, True, {"b": b, "d": p.d})


# ridge ------------------------------------------------------------------------

def ridge_map(x):
    """(prod x_i, x2*x4, x1/x5, x3*x6) for a 6-vector (or rows of an (n, 6) array)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 6:
        raise DimensionMismatch("ridge map needs 6 coordinates")
    if np.any(x[..., 4] == 0):
        raise SingularInput("fifth coordinate is zero")
    return np.stack(
        [np.prod(x, axis=-1), x[..., 1] * x[..., 3], x[..., 0] / x[..., 4], x[..., 2] * x[..., 5]],
        axis=-1,
    )


RIDGE_DEFAULTS = {
    "mu_i": [1.0] * 6,
    "gamma_i": (0.5 * np.eye(6)).tolist(),
    "mu_o": [1.0] * 4,
    "gamma_o": (0.01 * np.eye(4)).tolist(),
}


def make_ridge(mu_i=None, gamma_i=None, mu_o=None, gamma_o=None):
    """Unnormalized Gaussian prior on R^6 times a Gaussian likelihood of the ridge map."""
    mu_i = RIDGE_DEFAULTS["mu_i"] if mu_i is None else mu_i
    gamma_i = RIDGE_DEFAULTS["gamma_i"] if gamma_i is None else gamma_i
    mu_o = RIDGE_DEFAULTS["mu_o"] if mu_o is None else mu_o
    gamma_o = RIDGE_DEFAULTS["gamma_o"] if gamma_o is None else gamma_o
    prior = make_gaussian(mu_i, gamma_i, jitter=0)
    lik = make_gaussian(mu_o, gamma_o, jitter=0)
    if prior.dim != 6 or lik.dim != 4:
        raise DimensionMismatch("ridge target needs a 6-d prior and a 4-d likelihood")

    def logpdf(x):
        out = np.full(x.shape[0], -np.inf)
        ok = x[:, 4] != 0
        if np.any(ok):
            xs = x[ok]
            out[ok] = prior.log_density(xs) + lik.log_density(ridge_map(xs))
        return out

    params = {"mu_i": prior.mean.tolist(), "gamma_i": prior.covariance.tolist(),
              "mu_o": lik.mean.tolist(), "gamma_o": lik.covariance.tolist()}
    return TargetDensity("ridge", 6, logpdf, None, False, params)


# bimodal ------------------------------------------------------------------------

AR_CONVENTIONS = ("abs_diff", "max_index")


def ar_matrix(rho, d, convention="abs_diff"):
    """First-order autoregressive matrix.

    ``abs_diff`` gives ``rho**|i-j|``; ``max_index`` gives ``rho**(max(i,j)-1)``
    with 1-based indices. The result must be positive definite.
    """
    if not abs(rho) < 1:
        raise ConfigError("rho", "|rho| must be < 1")
    if d < 1:
        raise DimensionMismatch("d must be positive")
    i, j = np.indices((d, d))
    if convention == "abs_diff":
        m = float(rho) ** np.abs(i - j)
    elif convention == "max_index":
        m = float(rho) ** np.maximum(i, j)
    else:
        raise ConfigError("convention", f"unknown AR convention {convention!r}")
    m = m.astype(np.float64)
    if np.linalg.eigvalsh(m).min() <= 0:
        raise NonPositiveDefinite(f"AR matrix ({convention}, rho={rho}, d={d}) is not positive definite")
    return m


@dataclass(frozen=True)
class BimodalParams:
    d: int = 4
    lam: float = 0.5
    mode_gap: float = 9.0
    rho1: float = -0.95
    rho2: float = 0.95
    box: tuple = (-3.0, 12.0)

    @property
    def mu1(self):
        return np.zeros(self.d)

    @property
    def mu2(self):
        return np.full(self.d, self.mode_gap)


def make_bimodal(p=None, convention="abs_diff"):
    """Two-Gaussian mixture restricted to a uniform box prior (box constant omitted)."""
    p = p or BimodalParams()
    g1 = make_gaussian(p.mu1, ar_matrix(p.rho1, p.d, convention), jitter=0)
    g2 = make_gaussian(p.mu2, ar_matrix(p.rho2, p.d, convention), jitter=0)
    lo, hi = p.box
    log_w = np.log([p.lam, 1.0 - p.lam])

    def logpdf(x):
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        out = np.full(x.shape[0], -np.inf)
        if np.any(inside):
            xs = x[inside]
            out[inside] = np.logaddexp(log_w[0] + g1.log_density(xs), log_w[1] + g2.log_density(xs))
        return out

    def sampler(rng, size):
        out = np.empty((0, p.d))
        while out.shape[0] < size:
            m = size - out.shape[0]
            first = rng.random(m) < p.lam
            draws = np.where(first[:, None], g1.sample(rng, m), g2.sample(rng, m))
            keep = np.all((draws >= lo) & (draws <= hi), axis=1)
            out = np.vstack([out, draws[keep]])
        return out[:size]

    params = {"d": p.d, "lam": p.lam, "rho1": p.rho1, "rho2": p.rho2, "box": list(p.box),
              "convention": convention}
    t = TargetDensity("bimodal", p.d, logpdf, sampler, False, params)
    return t


# plain Gaussian (testing and calibration) ------------------------------------------------

def make_gaussian_target(mean, cov):
    g = make_gaussian(mean, cov, jitter=0)
    return TargetDensity("gaussian", g.dim, g.log_density, lambda rng, size: g.sample(rng, size), True,
                         {"mean": g.mean.tolist(), "cov": g.covariance.tolist()})


def build_target(name, **params):
    """Construct a built-in target by name with parameter overrides."""
    if name == "trimodal_1d":
        if params:
            raise ConfigError("target", "trimodal_1d takes no parameters")
        return make_trimodal_1d()
    if name == "banana":
        return make_banana(BananaParams(**params))
    if name == "ridge":
        return make_ridge(**params)
    if name == "bimodal":
        convention = params.pop("convention", "abs_diff")
        if "box" in params:
            params["box"] = tuple(params["box"])
        return make_bimodal(BimodalParams(**params), convention)
    if name == "gaussian":
        return make_gaussian_target(params["mean"], params["cov"])
    raise ConfigError("target.name", f"unknown target {name!r}")
