"""Performance indicators for MCMC output.

ESS (autocorrelation-discounted sample fraction), acceptance rate, KL
divergence between the target and a kernel density estimate of the chain,
mean squared jumping distance, efficiency (ESS per CPU second), tail visit
statistics and mode fractions, plus Monte Carlo KL estimators between the
target and a proposal and between two proposals.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import _core
from .errors import DegenerateSeries, DimensionMismatch, TooFewPoints, UnnormalizedTarget

ESS_MAX_LAG = 1000
ESS_CUTOFF = 0.01
KDE_MIN_SAMPLES = 30
DEFAULT_KL_SAMPLES = 5000


# effective sample size -----------------------------------------------------------

def autocorrelation(x, max_lag):
    """Empirical autocorrelations rho_0..rho_max_lag (FFT, biased 1/n autocovariance)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:max_lag + 1] / n
    if not acov[0] > 0:
        raise DegenerateSeries("series has zero variance")
    return acov / acov[0]


def ess_lag_window(rho, cutoff=ESS_CUTOFF):
    """Smallest lag ``t0 >= 0`` with ``rho[t0 + l] < cutoff`` for every computed ``l > 0``.

    This is the last lag whose autocorrelation reaches the cutoff (0 if
    there is none), so it equals the window length when the last computed
    autocorrelation is still above the cutoff.
    """
    above = np.flatnonzero(rho[1:] >= cutoff)
    return 0 if above.size == 0 else int(above[-1]) + 1


def ess(series, max_lag=ESS_MAX_LAG):
    """Normalized effective sample size of a scalar series.

    ``1 / (1 + 2 * sum_{t=1}^{T} rho_t)`` with ``T = min(max_lag, t0)``, where
    ``t0`` is the smallest lag beyond which every computed autocorrelation
    (up to ``max_lag``) stays below 0.01. The result is clamped to (0, 1].

    The rule is sensitive to sampling noise: a single autocorrelation above
    0.01 near lag ``max_lag`` pulls in every lag below it, so even an iid
    series of length 1e5 occasionally scores around 0.8.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.shape[0] < 10:
        raise TooFewPoints("ess needs a series of length >= 10")
    if not np.all(np.isfinite(x)):
        raise DegenerateSeries("series contains non-finite values")
    if np.ptp(x) == 0:
        raise DegenerateSeries("series has zero variance")
    L = min(max_lag, x.shape[0] - 1)
    rho = autocorrelation(x, L)
    T = min(L, ess_lag_window(rho))
    denom = 1.0 + 2.0 * float(np.sum(rho[1:T + 1]))
    if denom <= 1.0:
        return 1.0
    return 1.0 / denom


def multivariate_ess(states, max_lag=ESS_MAX_LAG):
    """Minimum ESS over the marginal series of an ``(n, d)`` chain."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    return min(ess(s[:, j], max_lag) for j in range(s.shape[1]))


# exploration ------------------------------------------------------------------------

def jumping_distance(states):
    """Mean squared Euclidean jump ``(1/(n-1)) sum ||X_{k+1} - X_k||^2``."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] < 2:
        raise TooFewPoints("jumping distance needs at least two states")
    dx = np.diff(s, axis=0)
    return float(np.einsum("ij,ij->", dx, dx) / dx.shape[0])


def tail_statistics(states, coord, threshold, below=True):
    """Visit frequency and mean return time of ``{x[coord] < threshold}``.

    With ``below=False`` the event is ``x[coord] > threshold``. The return
    time is the mean gap in iterations between consecutive entries into the
    event set, an entry being a visit whose predecessor lies outside the set
    (the first state counts as an entry when it is a visit). It is ``inf``
    when there are fewer than two entries, except for a chain that never
    leaves the set, which returns at every step (return time 1).

    Returns
    -------
    (frequency, mean_return_time)
    """
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    x = s[:, coord]
    hit = x < threshold if below else x > threshold
    n = x.shape[0]
    freq = float(np.count_nonzero(hit) / n) if n else 0.0
    if n and hit.all():
        return freq, 1.0
    entries = np.flatnonzero(hit & ~np.r_[False, hit[:-1]])
    if entries.shape[0] < 2:
        return freq, math.inf
    return freq, float(np.mean(np.diff(entries)))


def mode_fraction(states, mu1, mu2):
    """Fraction of states closer (Euclidean) to ``mu1`` than to ``mu2``; ties count for ``mu1``."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] < 1:
        raise TooFewPoints("mode_fraction needs at least one state")
    d1 = np.sum((s - np.asarray(mu1)) ** 2, axis=1)
    d2 = np.sum((s - np.asarray(mu2)) ** 2, axis=1)
    return float(np.mean(d1 <= d2))


# kernel density estimate ----------------------------------------------------------------

def silverman_bandwidth(samples, counts=None):
    """Per-dimension normal-reference bandwidths.

    ``1.06 * sd * n**(-1/5)`` in one dimension and
    ``(4 / (d + 2))**(1 / (d + 4)) * sd_j * n**(-1 / (d + 4))`` for the product
    kernel in ``d > 1`` dimensions. ``counts`` gives multiplicities of the rows.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    w = np.ones(x.shape[0]) if counts is None else np.asarray(counts, dtype=np.float64)
    n = float(w.sum())
    if n < 2:
        raise TooFewPoints("bandwidth needs at least two samples")
    mean = w @ x / n
    var = w @ (x - mean) ** 2 / (n - 1)
    sd = np.sqrt(var)
    if np.any(sd == 0):
        raise DegenerateSeries("a sample coordinate has zero spread")
    d = x.shape[1]
    if d == 1:
        return 1.06 * sd * n ** (-0.2)
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * sd * n ** (-1.0 / (d + 4))


def _unique_with_counts(x):
    u, counts = np.unique(x, axis=0, return_counts=True)
    return np.ascontiguousarray(u), counts


class ChainKDE:
    """Gaussian product-kernel density estimate of a sample.

    Repeated rows (as produced by rejected MH moves) are merged into one
    weighted kernel, which leaves the estimate unchanged.
    """

    def __init__(self, samples, bandwidths=None):
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] < KDE_MIN_SAMPLES:
            raise TooFewPoints(f"KDE needs at least {KDE_MIN_SAMPLES} samples")
        self.points, counts = _unique_with_counts(x)
        self.n = x.shape[0]
        self.dim = x.shape[1]
        self.log_weights = np.log(counts / self.n)
        if bandwidths is None:
            bandwidths = silverman_bandwidth(self.points, counts)
        self.bandwidths = np.ascontiguousarray(np.broadcast_to(np.asarray(bandwidths, dtype=np.float64),
                                                               (self.dim,)))

    def log_density(self, query):
        # a scalar or a (d,) vector is one point; in d=1 a flat vector is a batch
        q = np.asarray(query, dtype=np.float64)
        single = q.ndim == 0 or (q.ndim == 1 and self.dim > 1)
        if self.dim == 1 and q.ndim <= 1:
            pts = q.reshape(-1, 1)
        else:
            pts = q.reshape(1, -1) if q.ndim == 1 else q
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionMismatch(f"query dimension {pts.shape[1]} != sample dimension {self.dim}")
        out = _core.kde_logpdf(np.ascontiguousarray(pts), self.points, self.log_weights, self.bandwidths)
        return float(out[0]) if single else out


def kde_log_density(samples, query):
    """Log of the Gaussian KDE of ``samples`` evaluated at ``query`` (one point or a batch)."""
    return ChainKDE(samples).log_density(query)


# KL estimators --------------------------------------------------------------------------

def _require_normalized(target, allow_unnormalized):
    if target.exact_sampler is None:
        raise UnnormalizedTarget(f"target {target.name!r} has no exact sampler")
    if not target.normalized and not allow_unnormalized:
        raise UnnormalizedTarget(f"target {target.name!r} is not normalized")


def kl_target_vs_chain(target, chain_states, L=DEFAULT_KL_SAMPLES, rng=None, *, allow_unnormalized=False):
    """Monte Carlo estimate of KL(pi, KDE of the chain) from ``L`` exact draws of pi."""
    _require_normalized(target, allow_unnormalized)
    rng = np.random.default_rng(rng)
    z = target.sample(rng, L)
    kde = ChainKDE(chain_states)
    return float(np.mean(target.log_density(z) - kde.log_density(z)))


def kl_pi_vs_proposal(target, proposal, L=DEFAULT_KL_SAMPLES, rng=None, *, allow_unnormalized=False):
    """Monte Carlo estimate of KL(pi, Q) for any object with a ``log_density`` method."""
    _require_normalized(target, allow_unnormalized)
    rng = np.random.default_rng(rng)
    z = target.sample(rng, L)
    return float(np.mean(target.log_density(z) - proposal.log_density(z)))


def kl_between_proposals(q_a, q_b, L=DEFAULT_KL_SAMPLES, rng=None, *, method="log"):
    """Monte Carlo estimate of KL(q_a, q_b) from ``L`` draws of ``q_a``.

    ``method="log"`` averages ``log q_a - log q_b``. ``method="ratio"`` averages
    ``r - 1 - log r`` with ``r = q_b / q_a``; it is unbiased when both densities
    are normalized and never negative, and it is far less noisy when the two are
    close (consecutive proposals, say). Use it only when ``r`` is bounded, since
    its variance is otherwise infinite.
    """
    if method not in ("log", "ratio"):
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(rng)
    y = q_a.propose(rng, L) if hasattr(q_a, "propose") else q_a.sample(rng, L)
    log_r = q_b.log_density(y) - q_a.log_density(y)
    if method == "log":
        return float(-np.mean(log_r))
    return float(np.mean(np.expm1(log_r) - log_r))


# report ---------------------------------------------------------------------------------

@dataclass
class TailEvent:
    """Event ``{x[coord] < threshold}`` (or ``>`` when ``below`` is False)."""

    label: str
    coord: int
    threshold: float
    below: bool = True


@dataclass
class DiagnosticsReport:
    ess: float
    acc: float
    kl_chain: Optional[float]
    jmp: float
    eff: float
    cpu_seconds: float
    m_n: int
    tail_stats: list = field(default_factory=list)
    lambda_hat: Optional[float] = None
    sampler: str = ""
    valid: bool = True

    def to_dict(self, include_timing=True):
        doc = asdict(self)
        doc["tail_stats"] = [[lab, f, _finite_or_str(r)] for lab, f, r in self.tail_stats]
        for k in ("ess", "eff", "kl_chain", "jmp"):
            doc[k] = _finite_or_str(doc[k])
        if not include_timing:
            doc.pop("cpu_seconds")
            doc.pop("eff")
        return doc


def _finite_or_str(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else str(v)


def diagnose(trace, target=None, *, kl_samples=DEFAULT_KL_SAMPLES, seed=0, tail_events=(),
             modes=None, allow_unnormalized=False):
    """Compute a :class:`DiagnosticsReport` for a finished trace.

    KL is computed only when ``target`` is given and has an exact sampler
    (and is normalized unless ``allow_unnormalized``); otherwise it is ``None``.
    ``modes`` is an optional ``(mu1, mu2)`` pair for :func:`mode_fraction`.
    """
    states = trace.states
    try:
        e = multivariate_ess(states)
    except DegenerateSeries:
        e = 0.0
    cpu = float(trace.wall_time_seconds)
    kl = None
    if target is not None and target.exact_sampler is not None and (target.normalized or allow_unnormalized):
        kl = kl_target_vs_chain(target, states, kl_samples, np.random.default_rng(seed),
                                allow_unnormalized=allow_unnormalized)
    tails = []
    for ev in tail_events:
        f, r = tail_statistics(states, ev.coord, ev.threshold, ev.below)
        tails.append((ev.label, f, r))
    lam = None if modes is None else mode_fraction(states, modes[0], modes[1])
    return DiagnosticsReport(
        ess=e,
        acc=trace.acceptance_rate,
        kl_chain=kl,
        jmp=jumping_distance(states) if states.shape[0] >= 2 else 0.0,
        eff=e / cpu if cpu > 0 else math.inf,
        cpu_seconds=cpu,
        m_n=trace.final_component_count,
        tail_stats=tails,
        lambda_hat=lam,
        sampler=trace.sampler,
        valid=trace.valid,
    )
