"""Comparison samplers: random-walk MH, the independence sampler, adaptive
Metropolis (AMH) and an adaptive Gaussian-mixture independence sampler (AGM).

All of them return the same :class:`~aimm.trace.Trace` as :func:`run_aimm`,
so diagnostics run unmodified on any of them. Random-walk samplers store NaN
in ``log_weights_at_proposals``.

Random-walk chains draw their Gaussian increments and uniforms from one
stream and AMH draws its kernel choices from a second, independent stream;
AMH with ``p_fixed = 1`` therefore reproduces RWMH with scale ``sigma0``
draw for draw.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import AimmError, ConfigError, DimensionMismatch, NonPositiveDefinite
from .gaussian import DEFAULT_JITTER, cholesky_with_jitter, make_gaussian
from .mixture import DefensiveKernel, GaussianMixture
from .sampler import AimmConfig, run_aimm
from .trace import TraceRecorder

log = logging.getLogger(__name__)

_BLOCK = 4096
_ERRORS = (AimmError, np.linalg.LinAlgError, FloatingPointError, ValueError)


def _streams(seed):
    ss = np.random.SeedSequence(int(seed))
    main, aux = ss.spawn(2)
    return np.random.default_rng(main), np.random.default_rng(aux)


def _initial_state(target, rng, x0, q0):
    if x0 is not None:
        x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    elif q0 is not None:
        x = np.atleast_1d(q0.sample(rng))
    else:
        x = np.zeros(target.dim)
    if x.shape != (target.dim,):
        raise DimensionMismatch(f"initial state must have length {target.dim}")
    return x


def _check_cov(cov, d, name):
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape != (d, d):
        raise ConfigError(name, f"must be a {d}x{d} matrix")
    if not np.any(cov):
        raise ConfigError(name, "proposal scale must be nonzero")
    try:
        make_gaussian(np.zeros(d), cov, jitter=0)
    except AimmError as exc:
        raise ConfigError(name, str(exc)) from None
    return cov


# random walk ---------------------------------------------------------------------------

def _random_walk(target, x, iterations, rng, aux, chol_at, name):
    """Shared Gaussian random-walk MH loop.

    ``chol_at(n, history_state, aux_uniform)`` returns the Cholesky factor of
    the proposal covariance at iteration ``n``; it is called after the state
    ``X_n`` has been recorded.
    """
    rec = TraceRecorder(name, iterations, x)
    lp = float(target.log_density(x))
    batch = target.batch_log_density
    d = x.shape[0]
    error = None
    t0 = time.perf_counter()
    try:
        n = 0
        while n < iterations:
            B = min(_BLOCK, iterations - n)
            z = rng.standard_normal((B, d))
            lu = np.log(rng.random(B))
            a = aux.random(B)
            for k in range(B):
                L = chol_at(n, x, a[k])
                y = x + L @ z[k]
                lpy = float(batch(y[None])[0])
                acc = lu[k] <= lpy - lp
                if acc:
                    x, lp = y, lpy
                i = rec.n
                rec.states[i] = x
                rec.proposals[i] = y
                rec.accepted[i] = acc
                rec.log_pi[i] = lpy
                rec.n = i + 1
                n += 1
    except _ERRORS as exc:
        log.warning("%s run aborted at iteration %d: %s", name, rec.n, exc)
        error = f"{type(exc).__name__}: {exc}"
    return rec, time.perf_counter() - t0, error


def default_rwmh_scale(sigma0):
    """Optimal-scaling heuristic ``(2.38**2 / d) * sigma0``."""
    sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=np.float64))
    return (2.38 ** 2 / sigma0.shape[0]) * sigma0


def run_rwmh(target, scale=None, iterations=1000, seed=0, *, sigma0=None, x0=None, q0=None):
    """Gaussian random-walk Metropolis-Hastings.

    Parameters
    ----------
    scale : (d, d) array, optional
        Proposal covariance. Defaults to ``(2.38**2/d) * sigma0``, where
        ``sigma0`` defaults to the covariance of ``q0``.
    x0, q0 :
        Initial state, or a kernel to draw it from (zeros if neither given).
    """
    d = target.dim
    if scale is None:
        if sigma0 is None:
            if q0 is None:
                raise ConfigError("scale", "give a scale, sigma0 or q0")
            sigma0 = q0.covariance
        scale = default_rwmh_scale(sigma0)
    scale = _check_cov(scale, d, "scale")
    L = cholesky_with_jitter(scale, 0)[0]
    rng, aux = _streams(seed)
    x = _initial_state(target, rng, x0, q0)
    rec, wall, error = _random_walk(target, x, int(iterations), rng, aux, lambda n, s, a: L, "rwmh")
    cfg = {"scale": scale.tolist(), "iterations": int(iterations), "seed": int(seed)}
    return rec.finish(wall, seed=int(seed), config=cfg, valid=error is None, error=error)


# independence sampler -------------------------------------------------------------------

def run_im(target, q0, iterations=1000, seed=0, **kwargs):
    """Independence MH with the fixed proposal ``q0`` (AIMM with adaptation frozen)."""
    cfg = AimmConfig(iterations=int(iterations), seed=seed, n0=math.inf, **kwargs)
    return run_aimm(target, q0, cfg, sampler_name="im")


# adaptive Metropolis ----------------------------------------------------------------------

@dataclass
class AmhConfig:
    """Adaptive Metropolis with a defensive fixed-covariance component.

    After ``n0`` iterations the proposal is ``N(x, sigma0)`` with probability
    ``p_fixed`` and ``N(x, s_d * Gamma_n)`` otherwise, ``Gamma_n`` being the
    empirical covariance of the states so far. ``s_d`` defaults to
    ``2.4**2 / d``.
    """

    sigma0: np.ndarray
    iterations: int
    n0: Optional[int] = None
    p_fixed: float = 0.05
    s_d: Optional[float] = None
    seed: int = 0
    x0: Optional[np.ndarray] = None
    jitter: float = DEFAULT_JITTER

    def resolved(self, d):
        s_d = 2.4 ** 2 / d if self.s_d is None else self.s_d
        n0 = int(1000 * math.sqrt(d)) if self.n0 is None else self.n0
        return AmhConfig(self.sigma0, self.iterations, n0, self.p_fixed, s_d, self.seed, self.x0, self.jitter)

    def validate(self, d, prefix=""):
        if not 0 < self.p_fixed <= 1:
            raise ConfigError(prefix + "p_fixed", "must lie in (0, 1]")
        if self.s_d is not None and not self.s_d > 0:
            raise ConfigError(prefix + "s_d", "must be positive")
        if self.n0 is not None and self.n0 < 0:
            raise ConfigError(prefix + "n0", "must be non-negative")
        if int(self.iterations) < 0:
            raise ConfigError(prefix + "iterations", "must be non-negative")
        _check_cov(self.sigma0, d, prefix + "sigma0")
        return self


class RunningCovariance:
    """Welford-style running mean and covariance (divisor ``n - 1``)."""

    def __init__(self, d):
        self.n = 0
        self.mean = np.zeros(d)
        self._m2 = np.zeros((d, d))

    def push(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self._m2 += np.outer(delta, x - self.mean)

    @property
    def covariance(self):
        if self.n < 2:
            return np.full(self._m2.shape, np.nan)
        c = self._m2 / (self.n - 1)
        return 0.5 * (c + c.T)


def run_amh(target, cfg, *, q0=None, checkpoint=None):
    """Adaptive Metropolis-Hastings.

    ``checkpoint(n, running_covariance)`` is called after each recorded state
    when given (used to verify the recursive covariance).
    """
    d = target.dim
    cfg.validate(d)
    cfg = cfg.resolved(d)
    sigma0 = np.atleast_2d(np.asarray(cfg.sigma0, dtype=np.float64))
    L0 = cholesky_with_jitter(sigma0, 0)[0]
    rng, aux = _streams(cfg.seed)
    x = _initial_state(target, rng, cfg.x0, q0)
    run = RunningCovariance(d)
    cache = {"n": -1, "L": L0}

    def chol_at(n, state, a):
        # Gamma_n is the covariance of X_1..X_n, pushed before the proposal at step n
        if n > 0:
            run.push(state)
            if checkpoint is not None:
                checkpoint(n, run)
        if n <= cfg.n0 or a < cfg.p_fixed:
            return L0
        if cache["n"] != n:
            try:
                cache["L"] = cholesky_with_jitter(cfg.s_d * run.covariance, cfg.jitter)[0]
            except NonPositiveDefinite:
                cache["L"] = L0
            cache["n"] = n
        return cache["L"]

    rec, wall, error = _random_walk(target, x, int(cfg.iterations), rng, aux, chol_at, "amh")
    conf = {"sigma0": sigma0.tolist(), "n0": cfg.n0, "p_fixed": cfg.p_fixed, "s_d": cfg.s_d,
            "iterations": int(cfg.iterations), "seed": int(cfg.seed)}
    return rec.finish(wall, seed=int(cfg.seed), config=conf, valid=error is None, error=error)


# adaptive Gaussian mixture --------------------------------------------------------------

def default_learning_rate(n):
    return 1.0 / (n + 1.0)


@dataclass
class AgmParams:
    """Mixture parameters updated in place by the AGM update rule."""

    weights: np.ndarray      # (M,)
    means: np.ndarray        # (M, d)
    covs: np.ndarray         # (M, d, d)

    def mixture(self, jitter=DEFAULT_JITTER):
        comps = [make_gaussian(m, c, jitter) for m, c in zip(self.means, self.covs)]
        with np.errstate(divide="ignore"):
            return GaussianMixture.from_components(comps, np.log(self.weights))


def psd_floor(cov, floor):
    """Raise the eigenvalues of a symmetric matrix to at least ``floor``."""
    cov = 0.5 * (cov + cov.T)
    try:
        L = np.linalg.cholesky(cov)
        if np.min(np.diag(L)) ** 2 >= floor:
            return cov
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(cov)
    if w.min() >= floor:
        return cov
    return (v * np.maximum(w, floor)) @ v.T


def online_em_update(params, x, lam, component_log_dens, *, floor=1e-8, min_resp=1e-10):
    """Stochastic-approximation (online EM) update of the mixture toward ``x``.

    Responsibilities ``r_l`` are proportional to ``w_l * phi_l(x)`` (passed in
    as ``component_log_dens``, already including the log weights). Then

        w_l   <- w_l + lam * (r_l - w_l)
        mu_l  <- mu_l + lam * r_l * (x - mu_l)
        Lam_l <- Lam_l + lam * r_l * ((x - mu_l)(x - mu_l)^T - Lam_l)

    with the covariance residual taken about the old mean and floored to
    stay positive definite. Components with responsibility below
    ``min_resp`` keep their mean and covariance.

    Returns the indices of the components whose mean/covariance changed.
    """
    lr = component_log_dens - np.max(component_log_dens)
    r = np.exp(lr)
    r /= r.sum()
    params.weights = params.weights + lam * (r - params.weights)
    params.weights = np.maximum(params.weights, 0.0)
    params.weights /= params.weights.sum()
    changed = np.flatnonzero(r > min_resp)
    for l in changed:
        resid = x - params.means[l]
        step = lam * r[l]
        params.means[l] = params.means[l] + step * resid
        params.covs[l] = psd_floor(params.covs[l] + step * (np.outer(resid, resid) - params.covs[l]), floor)
    return changed


@dataclass
class AgmConfig:
    """Adaptive Gaussian mixture independence sampler with ``n_components`` fixed components."""

    n_components: int
    init_center_sampler: DefensiveKernel
    iterations: int
    init_cov: Optional[np.ndarray] = None
    learning_rate_schedule: Callable[[int], float] = default_learning_rate
    seed: int = 0
    update_rule: Callable = online_em_update
    cov_floor: float = 1e-8

    def validate(self, d, prefix=""):
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise ConfigError(prefix + "n_components", "must be a positive integer")
        if self.init_center_sampler.dim != d:
            raise ConfigError(prefix + "init_center_sampler", "dimension does not match the target")
        if self.init_cov is not None:
            _check_cov(self.init_cov, d, prefix + "init_cov")
        if int(self.iterations) < 0:
            raise ConfigError(prefix + "iterations", "must be non-negative")
        return self


def run_agm(target, cfg):
    """Independence MH whose mixture proposal is updated after every transition."""
    d = target.dim
    cfg.validate(d)
    rng, _ = _streams(cfg.seed)
    M = int(cfg.n_components)
    cov0 = np.eye(d) if cfg.init_cov is None else np.atleast_2d(np.asarray(cfg.init_cov, dtype=np.float64))
    params = AgmParams(np.full(M, 1.0 / M), np.atleast_2d(cfg.init_center_sampler.sample(rng, M)).copy(),
                       np.repeat(cov0[None], M, axis=0))
    mix = params.mixture()
    x = np.atleast_1d(cfg.init_center_sampler.sample(rng))
    lp = float(target.log_density(x))
    batch = target.batch_log_density
    N = int(cfg.iterations)
    rec = TraceRecorder("agm", N, x)
    error = None
    t0 = time.perf_counter()
    try:
        for n in range(N):
            y = mix.sample(rng, 1)
            lpy = float(batch(y)[0])
            comp = mix.component_log_densities(np.vstack([x, y[0]]))
            with np.errstate(invalid="ignore"):
                lw_x = lp - np.logaddexp.reduce(comp[0])
                lw_y = lpy - np.logaddexp.reduce(comp[1])
            lu = math.log(rng.random())
            acc = lu <= min(0.0, lw_y - lw_x) if not math.isnan(lw_y - lw_x) else False
            if acc:
                x, lp = y[0], lpy
                cl = comp[1]
            else:
                cl = comp[0]
            rec.record_block(x[None], y, [acc], [lpy], [lw_y], M)
            changed = cfg.update_rule(params, x, cfg.learning_rate_schedule(n + 1), cl, floor=cfg.cov_floor)
            mix = _refresh_mixture(mix, params, changed)
    except _ERRORS as exc:
        log.warning("agm run aborted at iteration %d: %s", rec.n, exc)
        error = f"{type(exc).__name__}: {exc}"
    conf = {"n_components": M, "init_cov": cov0.tolist(), "iterations": N, "seed": int(cfg.seed)}
    return rec.finish(time.perf_counter() - t0, seed=int(cfg.seed), config=conf, valid=error is None,
                      error=error, proposal=params)


def _refresh_mixture(mix, params, changed):
    """Rebuild only the factors of the components that moved."""
    means = mix.means.copy()
    covs = mix.covariances.copy()
    chol = mix.chol.copy()
    chol_inv = mix.chol_inv.copy()
    log_norm = mix.log_norm.copy()
    for l in changed:
        g = make_gaussian(params.means[l], params.covs[l])
        means[l], covs[l], chol[l], chol_inv[l], log_norm[l] = (g.mean, g.covariance, g.chol_lower,
                                                                g.chol_inv, g.log_norm_const)
    with np.errstate(divide="ignore"):
        lw = np.log(params.weights)
    return GaussianMixture(mix.dim, means, covs, chol, chol_inv, log_norm, lw)
