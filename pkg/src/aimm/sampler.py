"""Adaptive Incremental Mixture MCMC (AIMM) and its fast variant (f-AIMM).

The chain is an independence Metropolis-Hastings sampler whose proposal
grows by one Gaussian component whenever a proposed state carries an
importance weight above the threshold ``W*`` (after ``n0`` iterations without
adaptation). The new component is centred on the proposed state; its
covariance is the empirical covariance of the past states lying within a
Mahalanobis radius ``tau * rho_n * pi(x~)`` of it, and its unnormalized weight
is ``pi(x~) ** gamma``.

:func:`run_aimm` processes proposals in blocks: because the proposal does
not depend on the current state, a block of candidates is drawn and
evaluated at once and the sequential accept/reject scan runs in the compiled
core. A block is cut short at the first increment and the unused candidates
are discarded, so every candidate is always a draw from the current proposal.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import _core
from .errors import AimmError, ConfigError, EmptyHistory, TooFewPoints
from .gaussian import DEFAULT_JITTER, GaussianComponent, empirical_covariance, make_gaussian
from .mixture import DefensiveKernel, IncrementalProposal
from .trace import Trace, TraceRecorder

log = logging.getLogger(__name__)

MAX_SEED = 2 ** 64 - 1


@dataclass
class AimmConfig:
    """User parameters of AIMM / f-AIMM.

    ``w_star`` and ``n0`` default to ``d`` and ``1000 * sqrt(d)`` once the
    dimension is known (see :meth:`resolved`). ``n0 = math.inf`` freezes the
    proposal, giving a plain independence sampler. ``sigma0`` defaults to the
    covariance of the defensive kernel.
    """

    iterations: int
    w_star: Optional[float] = None
    gamma: float = 0.5
    tau: float = 0.5
    kappa: float = 0.1
    n0: Optional[float] = None
    m_max: Optional[int] = None
    adapt_threshold: bool = False
    seed: int = 0
    sigma0: Optional[np.ndarray] = None
    neighborhood_scale: float = 1.0
    dedup_history: bool = False
    threshold_batch: int = 1000
    threshold_every: int = 1000
    threshold_tail: float = 1e-3
    block_size: int = 512
    keep_snapshots: bool = False
    jitter: float = DEFAULT_JITTER

    def resolved(self, d):
        cfg = replace(self)
        if cfg.w_star is None:
            cfg.w_star = float(d)
        if cfg.n0 is None:
            cfg.n0 = 1000.0 * math.sqrt(d)
        return cfg

    def validate(self, d=None, prefix=""):
        def bad(name, msg):
            raise ConfigError(prefix + name, msg)

        if not isinstance(self.iterations, (int, np.integer)) or self.iterations < 0:
            bad("iterations", "must be a non-negative integer")
        if self.w_star is not None and not self.w_star > 0:
            bad("w_star", "must be positive")
        for name in ("gamma", "tau", "kappa"):
            v = getattr(self, name)
            if not 0 < v < 1:
                bad(name, "must lie in (0, 1)")
        if self.n0 is not None and not self.n0 >= 0:
            bad("n0", "must be non-negative")
        if self.m_max is not None and (int(self.m_max) != self.m_max or self.m_max < 1):
            bad("m_max", "must be a positive integer")
        if not 0 <= int(self.seed) <= MAX_SEED:
            bad("seed", "must be a 64-bit unsigned integer")
        if not self.neighborhood_scale > 0:
            bad("neighborhood_scale", "must be positive")
        if self.block_size < 1:
            bad("block_size", "must be >= 1")
        if self.threshold_batch < 1 or self.threshold_every < 1:
            bad("threshold_batch", "threshold batch and cadence must be >= 1")
        if not 0 < self.threshold_tail < 1:
            bad("threshold_tail", "must lie in (0, 1)")
        if self.sigma0 is not None and d is not None:
            s = np.atleast_2d(np.asarray(self.sigma0, dtype=np.float64))
            if s.shape != (d, d):
                bad("sigma0", f"must be a {d}x{d} matrix")
            try:
                make_gaussian(np.zeros(d), s, jitter=0)
            except AimmError as exc:
                bad("sigma0", str(exc))
        return self

    def to_dict(self):
        doc = asdict(self)
        if self.sigma0 is not None:
            doc["sigma0"] = np.asarray(self.sigma0).tolist()
        if doc["n0"] is not None and math.isinf(doc["n0"]):
            doc["n0"] = "inf"
        return doc


@dataclass
class ChainState:
    x: np.ndarray
    log_pi: float
    log_q: float
    generation: int = 0
    accepted_count: int = 0
    iteration: int = 0

    @property
    def log_w(self):
        with np.errstate(invalid="ignore"):
            return self.log_pi - self.log_q

    def refresh(self, proposal):
        """Recompute ``log_q`` under ``proposal`` if its generation changed."""
        if self.generation != proposal.generation:
            self.log_q = proposal.log_density(self.x)
            self.generation = proposal.generation


def acceptance_log_prob(log_w_proposal, log_w_current):
    """log of ``1 ^ W(x')/W(x)``."""
    with np.errstate(invalid="ignore"):
        diff = log_w_proposal - log_w_current
    if math.isnan(diff):
        return -math.inf
    return min(0.0, diff)


def _first_occurrences(states):
    rs = np.zeros(states.shape[0], dtype=bool)
    rs[np.unique(states, axis=0, return_index=True)[1]] = True
    return rs


def _metric_inv(metric, d):
    if isinstance(metric, GaussianComponent):
        return metric.chol_inv
    return make_gaussian(np.zeros(d), metric).chol_inv


def build_neighborhood(states, x_tilde, log_pi_x_tilde, tau, rho_n, metric, *, scale=1.0,
                       run_starts=None, return_indices=False):
    """Past states within Mahalanobis distance ``scale * tau * rho_n * pi(x_tilde)``.

    The density enters through its log (``log_pi_x_tilde``). Repeated states
    from rejections are kept. When the selected set holds fewer than ``d + 2``
    distinct states, the radius is widened to the smallest one that covers
    ``d + 2`` distinct states (every copy of those states is included).

    ``run_starts`` flags the rows counted as distinct states. When omitted the
    first occurrence of every distinct row is flagged. A chain passes the rows
    that differ from their predecessor instead, which is the same set unless
    the chain revisits an earlier state after leaving it.
    """
    states = np.ascontiguousarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise EmptyHistory("no past states to build a neighborhood from")
    n, d = states.shape
    x_tilde = np.ascontiguousarray(x_tilde, dtype=np.float64)
    dist = np.sqrt(_core.sq_mahalanobis(states, x_tilde, _metric_inv(metric, d)))
    with np.errstate(divide="ignore"):
        log_bound = math.log(scale * tau * rho_n) if rho_n > 0 else -math.inf
    log_bound += log_pi_x_tilde
    if log_bound > 700:
        sel = np.ones(n, dtype=bool)
    elif log_bound == -math.inf or math.isnan(log_bound):
        sel = np.zeros(n, dtype=bool)
    else:
        sel = dist <= math.exp(log_bound)

    rs = _first_occurrences(states) if run_starts is None else np.asarray(run_starts, dtype=bool)
    need = d + 2
    if np.count_nonzero(rs & sel) < need:
        order = np.argsort(dist, kind="stable")
        counts = np.cumsum(rs[order])
        if counts[-1] < need:
            sel = np.ones(n, dtype=bool)
        else:
            p = int(np.searchsorted(counts, need))
            sel = dist <= dist[order[p]]
    idx = np.flatnonzero(sel)
    return (states[idx], idx) if return_indices else states[idx]


def make_increment(neighborhood, x_tilde, log_pi_x_tilde, gamma, *, jitter=DEFAULT_JITTER, fallback_cov=None):
    """New component centred on ``x_tilde`` with the neighborhood's empirical covariance.

    Returns ``(component, log_weight)`` with ``log_weight = gamma * log pi(x_tilde)``.
    ``fallback_cov`` replaces the empirical covariance when the neighborhood
    has fewer than two points or no spread at all.
    """
    nb = np.asarray(neighborhood, dtype=np.float64)
    cov = None
    if nb.shape[0] >= 2:
        cov = empirical_covariance(nb)
        if not np.trace(cov) > 0:
            cov = None
    if cov is None:
        if fallback_cov is None:
            raise TooFewPoints("neighborhood has no spread and no fallback covariance was given")
        cov = np.asarray(fallback_cov, dtype=np.float64)
    return make_gaussian(x_tilde, cov, jitter), gamma * float(log_pi_x_tilde)


class ThresholdUpdate(NamedTuple):
    w_star: float
    points: np.ndarray
    log_pi: np.ndarray
    log_q: np.ndarray


def adapt_threshold(proposal, target, current_w_star, prescribed_w_star, batch, rng, tail=1e-3):
    """Monte Carlo calibration of the f-AIMM threshold.

    Draws ``batch`` points from the proposal and returns the empirical
    ``1 - tail`` quantile of their importance weights (the
    ``ceil((1 - tail) * batch)``-th order statistic), capped at the prescribed
    threshold. The draws are returned for reuse as chain proposals.
    """
    pts = proposal.propose(rng, batch)
    lp = target.log_density(pts)
    lq = proposal.log_density(pts)
    with np.errstate(invalid="ignore"):
        lw = lp - lq
    k = int(math.ceil(round((1.0 - tail) * batch, 9)))
    q = float(np.exp(np.sort(lw)[k - 1]))
    return ThresholdUpdate(min(q, prescribed_w_star), pts, lp, lq)


class ThresholdAdapter:
    """Latching wrapper around :func:`adapt_threshold`.

    Adaptation stops for good once the calibrated threshold is within 1 of
    the prescribed one; later calls return ``None``.
    """

    def __init__(self, prescribed_w_star, batch=1000, tail=1e-3):
        self.prescribed = float(prescribed_w_star)
        self.current = None
        self.batch = batch
        self.tail = tail
        self.stopped = False

    def update(self, proposal, target, rng):
        if self.stopped:
            return None
        up = adapt_threshold(proposal, target, self.current, self.prescribed, self.batch, rng, self.tail)
        self.current = up.w_star
        if abs(up.w_star - self.prescribed) < 1:
            self.stopped = True
        return up


def _log(x):
    return math.log(x) if x > 0 else -math.inf


class _Increment:
    """Builds and applies one increment; shared by :func:`aimm_step` and :func:`run_aimm`."""

    def __init__(self, cfg, metric, d):
        self.cfg = cfg
        self.metric = metric
        self.d = d

    def __call__(self, proposal, history, run_starts, x_tilde, log_pi_tilde, rho_n):
        cfg = self.cfg
        if history.shape[0] == 0:
            nb = history
        else:
            if cfg.dedup_history:
                history, run_starts = history[run_starts], None
            nb = build_neighborhood(history, x_tilde, log_pi_tilde, cfg.tau, rho_n, self.metric,
                                    scale=cfg.neighborhood_scale, run_starts=run_starts)
        comp, log_beta = make_increment(nb, x_tilde, log_pi_tilde, cfg.gamma, jitter=cfg.jitter,
                                        fallback_cov=self.metric.covariance)
        return proposal.add_component(comp, log_weight=log_beta).truncate_window(cfg.m_max)


def _setup(target, q0, cfg):
    if q0.dim != target.dim:
        raise ConfigError("q0", f"defensive kernel dimension {q0.dim} != target dimension {target.dim}")
    cfg = cfg.resolved(target.dim).validate(target.dim)
    sigma0 = q0.covariance if cfg.sigma0 is None else np.atleast_2d(np.asarray(cfg.sigma0, dtype=np.float64))
    metric = make_gaussian(np.zeros(target.dim), sigma0)
    return cfg, metric


def init_chain(target, q0, cfg, rng):
    """Draw X_0 from the defensive kernel and build the starting proposal and state."""
    proposal = IncrementalProposal.initial(q0, cfg.kappa)
    x0 = q0.sample(rng)
    state = ChainState(x=x0, log_pi=target.log_density(x0), log_q=proposal.log_density(x0),
                       generation=proposal.generation)
    return state, proposal


def aimm_step(state, proposal, target, cfg, trace, rng, *, metric=None, log_threshold=None):
    """One AIMM transition (reference implementation of a single iteration).

    ``cfg`` must already be resolved for the target dimension. The trace is a
    :class:`~aimm.trace.TraceRecorder`. Returns ``(state, proposal)``.
    """
    d = target.dim
    if metric is None:
        sigma0 = proposal.defensive.covariance if cfg.sigma0 is None else cfg.sigma0
        metric = make_gaussian(np.zeros(d), sigma0)
    if log_threshold is None:
        log_threshold = _log(cfg.w_star)
    state.refresh(proposal)
    n = state.iteration

    x_t = proposal.propose(rng, 1)
    lp = float(target.log_density(x_t)[0])
    lq = float(proposal.log_density(x_t)[0])
    with np.errstate(invalid="ignore"):
        lw = lp - lq
    lu = math.log(rng.random(1)[0])
    accepted = lu <= acceptance_log_prob(lw, state.log_w)
    rho_before = state.accepted_count
    if accepted:
        state.x, state.log_pi, state.log_q = x_t[0], lp, lq
        state.accepted_count += 1

    trace.record_block(state.x[None], x_t, [accepted], [lp], [lw], proposal.n_components, log_threshold)
    if lw > log_threshold and n > cfg.n0:
        hist = trace.states[:n]
        rs = trace.accepted[:n].copy()
        if n:
            rs[0] = True
        proposal = _Increment(cfg, metric, d)(proposal, hist, rs, x_t[0], lp, rho_before)
        trace.increments.append(n)
        trace.n_comp[n] = proposal.n_components
        state.refresh(proposal)
    state.iteration = n + 1
    return state, proposal


def run_aimm(target, q0, cfg, *, sampler_name=None):
    """Run AIMM (or f-AIMM when ``cfg.adapt_threshold`` / ``cfg.m_max`` are set).

    Returns a :class:`~aimm.trace.Trace`; the final proposal is attached as
    ``trace.proposal``. Errors inside the loop abort the run and return the
    partial trace with ``valid=False``.
    """
    cfg, metric = _setup(target, q0, cfg)
    if sampler_name is None:
        sampler_name = "f_aimm" if (cfg.adapt_threshold or cfg.m_max) else "aimm"
    rng = np.random.default_rng(int(cfg.seed))
    t0 = time.perf_counter()
    d = target.dim
    N = int(cfg.iterations)
    n0 = float(cfg.n0)

    state, proposal = init_chain(target, q0, cfg, rng)
    rec = TraceRecorder(sampler_name, N, state.x)
    if cfg.keep_snapshots:
        rec.record_snapshot(-1, proposal)
    increment = _Increment(cfg, metric, d)
    log_thr = _log(cfg.w_star)
    adapter = ThresholdAdapter(cfg.w_star, cfg.threshold_batch, cfg.threshold_tail) if cfg.adapt_threshold else None
    cur_x, cur_lp, cur_lw = state.x, state.log_pi, state.log_w
    accepted_count = 0
    last_inc = -cfg.block_size
    buffer = None
    error = None

    try:
        while rec.n < N:
            n = rec.n
            adapting = adapter is not None and not adapter.stopped
            if adapting and n % cfg.threshold_every == 0:
                up = adapter.update(proposal, target, rng)
                log_thr = _log(up.w_star)
                rec.threshold_log.append((n, up.w_star))
                buffer = (up.points, up.log_pi, up.log_q)
                adapting = not adapter.stopped
            if buffer is None:
                B = cfg.block_size if n <= n0 else min(cfg.block_size, max(16, n - last_inc))
                B = min(B, N - n)
                if adapting:
                    B = min(B, cfg.threshold_every - n % cfg.threshold_every)
                pts = proposal.propose(rng, B)
                buffer = (pts, target.log_density(pts), proposal.log_density(pts))
            pts, lp, lq = buffer
            take = min(pts.shape[0], N - n)
            if adapting:
                take = min(take, cfg.threshold_every - n % cfg.threshold_every)
            pts, lp, lq = pts[:take], lp[:take], lq[:take]
            with np.errstate(invalid="ignore"):
                lw = np.ascontiguousarray(lp - lq)
            lu = np.log(rng.random(take))
            first_adapt = take if math.isinf(n0) else int(min(take, max(0, math.floor(n0 - n) + 1)))
            idx, stop = _core.mh_scan(lw, lu, float(cur_lw), float(log_thr), first_adapt)
            m = idx.shape[0]
            states = pts[np.maximum(idx, 0)]
            states[idx < 0] = cur_x
            accepted = idx == np.arange(m)
            rec.record_block(states, pts[:m], accepted, lp[:m], lw[:m], proposal.n_components, log_thr)
            if idx[-1] >= 0:
                j = idx[-1]
                cur_x, cur_lp, cur_lw = pts[j], float(lp[j]), float(lw[j])
            n_acc = int(np.count_nonzero(accepted))
            if stop < 0:
                accepted_count += n_acc
                buffer = None if m == pts.shape[0] else (buffer[0][m:], buffer[1][m:], buffer[2][m:])
                continue
            # increment triggered at loop index n + stop
            rho_before = accepted_count + n_acc - int(accepted[-1])
            accepted_count += n_acc
            n_inc = n + stop
            rs = rec.accepted[:n_inc].copy()
            if n_inc:
                rs[0] = True
            proposal = increment(proposal, rec.states[:n_inc], rs, pts[stop], float(lp[stop]), rho_before)
            rec.increments.append(n_inc)
            rec.n_comp[n_inc] = proposal.n_components
            with np.errstate(invalid="ignore"):
                cur_lw = cur_lp - proposal.log_density(cur_x)
            if cfg.keep_snapshots:
                mix = proposal.mixture
                rec.record_snapshot(n_inc, proposal, (mix.component(len(mix) - 1), float(mix.log_weights[-1])))
            buffer = None
            last_inc = n_inc + 1
    except (AimmError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        log.warning("AIMM run aborted at iteration %d: %s", rec.n, exc)
        error = f"{type(exc).__name__}: {exc}"

    return rec.finish(time.perf_counter() - t0, seed=int(cfg.seed), config=cfg.to_dict(),
                      valid=error is None, error=error, proposal=proposal)
