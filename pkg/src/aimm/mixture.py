"""Defensive kernels, Gaussian mixtures and the incremental independence proposal.

The incremental proposal is

    Q_n = omega_n * Q0 + (1 - omega_n) * sum_l beta_l phi_l / sum_l beta_l,
    omega_n = 1 / (1 + kappa * M_n),

with unnormalized weights ``beta_l`` kept in log space. Proposals are
immutable: :meth:`IncrementalProposal.add_component` and
:meth:`IncrementalProposal.truncate_window` return a new object with a bumped
``generation``, so a reader holding an older proposal keeps a consistent view.
"""

from dataclasses import dataclass, replace
import json

import numpy as np

from . import _core
from .errors import DimensionMismatch, InvalidWeight, ConfigError
from .gaussian import GaussianComponent, make_gaussian, DEFAULT_JITTER


def _logsumexp(a):
    # lean 1-d version; scipy's is general but slow for the per-step sizes used here
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return m + np.log(np.sum(np.exp(a - m)))


def _points(x, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.ndim != 2 or pts.shape[1] != d:
        raise DimensionMismatch(f"expected dimension {d}, got shape {x.shape}")
    return np.ascontiguousarray(pts), single


class DefensiveKernel:
    """Fixed baseline proposal: a Gaussian or a uniform distribution on a box."""

    def __init__(self, kind, gaussian=None, lower=None, upper=None):
        self.kind = kind
        if kind == "gaussian":
            if not isinstance(gaussian, GaussianComponent):
                raise ConfigError("q0", "gaussian defensive kernel needs a GaussianComponent")
            self.gaussian = gaussian
            self.dim = gaussian.dim
        elif kind == "uniform_box":
            lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
            upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
            if lower.shape != upper.shape or lower.ndim != 1:
                raise DimensionMismatch("box bounds must be vectors of equal length")
            if np.any(upper <= lower):
                raise ConfigError("q0", "box upper bounds must exceed lower bounds")
            self.lower, self.upper = lower, upper
            self.dim = lower.shape[0]
            self._log_vol = float(np.sum(np.log(upper - lower)))
        else:
            raise ConfigError("q0.kind", f"unknown defensive kernel {kind!r}")

    @classmethod
    def gaussian_kernel(cls, mean, cov):
        return cls("gaussian", gaussian=make_gaussian(mean, cov))

    @classmethod
    def uniform_box(cls, lower, upper):
        return cls("uniform_box", lower=lower, upper=upper)

    @property
    def covariance(self):
        if self.kind == "gaussian":
            return np.array(self.gaussian.covariance)
        return np.diag((self.upper - self.lower) ** 2 / 12.0)

    def log_density(self, x):
        pts, single = _points(x, self.dim)
        if self.kind == "gaussian":
            out = self.gaussian.log_density(pts)
        else:
            inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
            out = np.where(inside, -self._log_vol, -np.inf)
        return float(out[0]) if single else out

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        if self.kind == "gaussian":
            x = self.gaussian.sample(rng, n)
        else:
            x = self.lower + (self.upper - self.lower) * rng.random((n, self.dim))
        return x[0] if size is None else x

    def to_dict(self):
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.gaussian.mean.tolist(),
                    "cov": self.gaussian.covariance.tolist()}
        return {"kind": "uniform_box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, spec):
        kind = spec.get("kind")
        if kind == "gaussian":
            return cls.gaussian_kernel(spec["mean"], spec["cov"])
        if kind == "uniform_box":
            return cls.uniform_box(spec["lower"], spec["upper"])
        raise ConfigError("q0.kind", f"unknown defensive kernel {kind!r}")


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted Gaussian mixture with stacked parameter arrays.

    ``log_weights`` are unnormalized; normalization happens inside the
    log-sum-exp.
    """

    dim: int
    means: np.ndarray          # (M, d)
    covariances: np.ndarray    # (M, d, d)
    chol: np.ndarray           # (M, d, d)
    chol_inv: np.ndarray       # (M, d, d)
    log_norm: np.ndarray       # (M,)
    log_weights: np.ndarray    # (M,)

    @classmethod
    def empty(cls, dim):
        z = np.zeros((0, dim, dim))
        return cls(dim, np.zeros((0, dim)), z, z, z, np.zeros(0), np.zeros(0))

    @classmethod
    def from_components(cls, components, log_weights, dim=None):
        components = list(components)
        if not components:
            return cls.empty(dim)
        return cls(
            components[0].dim,
            np.ascontiguousarray([c.mean for c in components]),
            np.ascontiguousarray([c.covariance for c in components]),
            np.ascontiguousarray([c.chol_lower for c in components]),
            np.ascontiguousarray([c.chol_inv for c in components]),
            np.array([c.log_norm_const for c in components], dtype=np.float64),
            np.asarray(log_weights, dtype=np.float64).copy(),
        )

    def __len__(self):
        return self.means.shape[0]

    def component(self, i):
        return GaussianComponent(self.means[i], self.covariances[i], self.chol[i],
                                 self.chol_inv[i], float(self.log_norm[i]))

    @property
    def components(self):
        return [self.component(i) for i in range(len(self))]

    def normalized_log_weights(self):
        return self.log_weights - _logsumexp(self.log_weights)

    def log_coef(self):
        return np.ascontiguousarray(self.log_norm + self.normalized_log_weights())

    def log_density(self, x):
        pts, single = _points(x, self.dim)
        if len(self) == 0:
            out = np.full(pts.shape[0], -np.inf)
        else:
            out = _core.mixture_logpdf(pts, self.means, self.chol_inv, self.log_coef())
        return float(out[0]) if single else out

    def component_log_densities(self, x):
        """(n, M) matrix of log(w_l) + log phi_l(x) with normalized weights."""
        pts, _ = _points(x, self.dim)
        return _core.component_logpdf(pts, self.means, self.chol_inv, self.log_coef())

    def choose(self, rng, size):
        # cumulative-sum inversion on the unnormalized weights
        w = np.exp(self.log_weights - self.log_weights.max())
        cw = np.cumsum(w)
        idx = np.searchsorted(cw, rng.random(size) * cw[-1], side="right")
        return np.minimum(idx, len(self) - 1)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        idx = self.choose(rng, n)
        z = rng.standard_normal((n, self.dim))
        x = self.means[idx] + np.einsum("kij,kj->ki", self.chol[idx], z)
        return x[0] if size is None else x

    def append(self, comp, log_weight):
        if comp.dim != self.dim:
            raise DimensionMismatch("component dimension does not match mixture")
        return GaussianMixture(
            self.dim,
            np.concatenate([self.means, comp.mean[None]]),
            np.concatenate([self.covariances, comp.covariance[None]]),
            np.concatenate([self.chol, comp.chol_lower[None]]),
            np.concatenate([self.chol_inv, comp.chol_inv[None]]),
            np.append(self.log_norm, comp.log_norm_const),
            np.append(self.log_weights, float(log_weight)),
        )

    def window(self, start, stop=None):
        sl = slice(start, stop)
        return GaussianMixture(self.dim, self.means[sl], self.covariances[sl], self.chol[sl],
                               self.chol_inv[sl], self.log_norm[sl], self.log_weights[sl])


@dataclass(frozen=True, eq=False)
class IncrementalProposal:
    defensive: DefensiveKernel
    kappa: float
    mixture: GaussianMixture
    generation: int = 0

    @classmethod
    def initial(cls, defensive, kappa):
        if not 0 < kappa < 1:
            raise ConfigError("kappa", "kappa must lie in (0, 1)")
        return cls(defensive, float(kappa), GaussianMixture.empty(defensive.dim), 0)

    @property
    def dim(self):
        return self.defensive.dim

    @property
    def n_components(self):
        return len(self.mixture)

    @property
    def components(self):
        return self.mixture.components

    @property
    def log_weights(self):
        return self.mixture.log_weights.copy()

    @property
    def weights(self):
        return np.exp(self.mixture.log_weights)

    @property
    def omega(self):
        return 1.0 / (1.0 + self.kappa * len(self.mixture))

    def log_density(self, x):
        pts, single = _points(x, self.dim)
        out = self.defensive.log_density(pts)
        if len(self.mixture):
            w = self.omega
            with np.errstate(divide="ignore"):
                out = np.logaddexp(np.log(w) + out, np.log1p(-w) + self.mixture.log_density(pts))
        return float(out[0]) if single else out

    def log_importance_weight(self, x, log_pi_x):
        """log W(x) = log pi(x) - log Q(x); infinities propagate."""
        with np.errstate(invalid="ignore"):
            out = np.asarray(log_pi_x, dtype=np.float64) - self.log_density(x)
        return float(out) if np.ndim(out) == 0 else out

    def propose(self, rng, size=None):
        n = 1 if size is None else size
        out = np.empty((n, self.dim))
        from_q0 = rng.random(n) < self.omega
        k0 = int(from_q0.sum())
        if k0:
            out[from_q0] = self.defensive.sample(rng, k0)
        if k0 < n:
            out[~from_q0] = self.mixture.sample(rng, n - k0)
        return out[0] if size is None else out

    def incremental_part(self):
        """The increment-only mixture (the defensive kernel dropped)."""
        return self.mixture

    def add_component(self, mean, cov=None, weight=None, *, log_weight=None, jitter=DEFAULT_JITTER):
        if log_weight is None:
            if weight is None or not np.isfinite(weight) or weight <= 0:
                raise InvalidWeight(f"component weight must be positive and finite, got {weight}")
            log_weight = float(np.log(weight))
        elif not np.isfinite(log_weight):
            raise InvalidWeight(f"component log-weight must be finite, got {log_weight}")
        comp = mean if isinstance(mean, GaussianComponent) else make_gaussian(mean, cov, jitter)
        return replace(self, mixture=self.mixture.append(comp, log_weight), generation=self.generation + 1)

    def truncate_window(self, m_max):
        """Keep only the ``m_max`` most recently added components."""
        m = len(self.mixture)
        if m_max is None or m <= m_max:
            return self
        return replace(self, mixture=self.mixture.window(m - m_max), generation=self.generation + 1)

    def head(self, m):
        """The proposal as it stood when only the first ``m`` components existed.

        Exact for unwindowed AIMM, where components are only ever appended.
        """
        m = int(m)
        if not 0 <= m <= len(self.mixture):
            raise ValueError(f"head size must lie in [0, {len(self.mixture)}], got {m}")
        return replace(self, mixture=self.mixture.window(0, m), generation=m)

    # serialization -------------------------------------------------------------

    def to_dict(self):
        mix = self.mixture
        return {
            "kappa": self.kappa,
            "generation": self.generation,
            "omega": self.omega,
            "defensive": self.defensive.to_dict(),
            "means": mix.means.tolist(),
            "covariances": mix.covariances.tolist(),
            "log_weights": mix.log_weights.tolist(),
            "weights": np.exp(mix.log_weights - _logsumexp(mix.log_weights)).tolist() if len(mix) else [],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc):
        defensive = DefensiveKernel.from_dict(doc["defensive"])
        comps = [make_gaussian(m, c) for m, c in zip(doc["means"], doc["covariances"])]
        mix = GaussianMixture.from_components(comps, doc["log_weights"], defensive.dim)
        return cls(defensive, float(doc["kappa"]), mix, int(doc.get("generation", 0)))
