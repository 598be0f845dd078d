import json
import math

import numpy as np
import pytest

from aimm.errors import ConfigError, DimensionMismatch, InvalidWeight
from aimm.gaussian import make_gaussian
from aimm.mixture import DefensiveKernel, GaussianMixture, IncrementalProposal
from oracles import gaussian_logpdf_naive, mixture_logpdf_naive, proposal_logpdf_naive


def _proposal(rng, d=2, m=4, kappa=0.1):
    q0 = DefensiveKernel.gaussian_kernel(np.zeros(d), 10 * np.eye(d))
    p = IncrementalProposal.initial(q0, kappa)
    comps = []
    for _ in range(m):
        a = rng.standard_normal((d, d))
        cov = a @ a.T + 0.2 * np.eye(d)
        mean = rng.standard_normal(d) * 5
        w = float(rng.uniform(0.1, 2.0))
        p = p.add_component(mean, cov, w)
        comps.append((w, mean, cov))
    return q0, p, comps


def test_omega_follows_component_count(rng):
    _, p, _ = _proposal(rng, m=5, kappa=0.1)
    assert p.omega == pytest.approx(1 / 1.5)
    assert IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0], [[1]]), 0.3).omega == 1.0


def test_density_matches_naive(rng):
    q0, p, comps = _proposal(rng)
    ws, ms, cs = zip(*comps)
    x = rng.standard_normal((6, 2)) * 4
    got = p.log_density(x)
    want = [proposal_logpdf_naive(xi, p.omega, lambda z: gaussian_logpdf_naive(z, np.zeros(2), 10 * np.eye(2)),
                                  ws, ms, cs) for xi in x]
    np.testing.assert_allclose(got, want, rtol=1e-11)


def test_incremental_part_density(rng):
    _, p, comps = _proposal(rng)
    ws, ms, cs = zip(*comps)
    x = rng.standard_normal(2)
    assert p.incremental_part().log_density(x) == pytest.approx(mixture_logpdf_naive(x, ws, ms, cs), rel=1e-12)


def test_mixture_density_without_overflow():
    # components far away in log-density: log-sum-exp must not underflow to -inf
    g = [make_gaussian([0.0], [[1e-4]]), make_gaussian([100.0], [[1e-4]])]
    mix = GaussianMixture.from_components(g, [0.0, 0.0])
    v = mix.log_density([50.0])
    assert np.isfinite(v)


def test_empty_mixture_is_defensive_kernel(rng):
    q0 = DefensiveKernel.gaussian_kernel([0.0, 1.0], np.eye(2))
    p = IncrementalProposal.initial(q0, 0.1)
    x = rng.standard_normal((4, 2))
    np.testing.assert_allclose(p.log_density(x), q0.log_density(x))


def test_weights_and_generation(rng):
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[1.0]])
    p0 = IncrementalProposal.initial(q0, 0.1)
    p1 = p0.add_component([1.0], [[1.0]], 2.0)
    p2 = p1.add_component([2.0], [[1.0]], log_weight=math.log(6.0))
    assert (p0.generation, p1.generation, p2.generation) == (0, 1, 2)
    assert p0.n_components == 0 and p2.n_components == 2
    np.testing.assert_allclose(p2.weights, [2.0, 6.0])


def test_invalid_weight_rejected(rng):
    p = IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0.0], [[1.0]]), 0.1)
    for w in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(InvalidWeight):
            p.add_component([0.0], [[1.0]], w)


def test_kappa_range():
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[1.0]])
    for k in (0.0, 1.0, -0.5):
        with pytest.raises(ConfigError):
            IncrementalProposal.initial(q0, k)


def test_component_dimension_checked():
    p = IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0.0], [[1.0]]), 0.1)
    with pytest.raises(DimensionMismatch):
        p.add_component(make_gaussian([0.0, 0.0], np.eye(2)), log_weight=0.0)


def test_truncate_window_keeps_most_recent(rng):
    _, p, comps = _proposal(rng, m=5)
    t = p.truncate_window(3)
    assert t.n_components == 3
    np.testing.assert_allclose(t.mixture.means, [c[1] for c in comps[2:]])
    assert t.omega == pytest.approx(1 / 1.3)
    assert t.generation == p.generation + 1
    assert p.truncate_window(10) is p


def test_head_rebuilds_earlier_proposals(rng):
    q0, p, comps = _proposal(rng, m=5)
    x = rng.standard_normal((6, 2)) * 3
    q = IncrementalProposal.initial(q0, 0.1)
    for m in range(6):
        np.testing.assert_allclose(p.head(m).log_density(x), q.log_density(x), rtol=1e-12)
        if m < 5:
            w, mean, cov = comps[m]
            q = q.add_component(mean, cov, w)
    with pytest.raises(ValueError):
        p.head(6)


def test_sampling_frequency_of_defensive_kernel(rng):
    # defensive kernel far from the components: the fraction drawn near it estimates omega
    q0 = DefensiveKernel.gaussian_kernel([-100.0], [[1.0]])
    p = IncrementalProposal.initial(q0, 0.25)
    for m in (0.0, 5.0):
        p = p.add_component([m], [[1.0]], 1.0)
    x = p.propose(rng, 100000)
    assert np.mean(x[:, 0] < -50) == pytest.approx(p.omega, abs=0.005)
    assert p.propose(rng).shape == (1,)


def test_sampling_matches_density(rng):
    # histogram of draws against the density on a 1-d grid
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[10.0]])
    p = IncrementalProposal.initial(q0, 0.1).add_component([3.0], [[0.2]], 1.0).add_component([-4.0], [[1.0]], 3.0)
    x = p.propose(rng, 400000)[:, 0]
    edges = np.linspace(-10, 10, 81)
    hist, _ = np.histogram(x, edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    expect = np.exp(p.log_density(mids[:, None])) * (edges[1] - edges[0]) * x.size
    assert np.max(np.abs(hist - expect) / np.sqrt(expect + 1)) < 5


def test_uniform_box_kernel(rng):
    q0 = DefensiveKernel.uniform_box([-1.0, 0.0], [1.0, 4.0])
    assert q0.log_density([0.0, 1.0]) == pytest.approx(-math.log(8.0))
    assert q0.log_density([2.0, 1.0]) == -math.inf
    x = q0.sample(rng, 1000)
    assert np.all((x >= [-1, 0]) & (x <= [1, 4]))
    np.testing.assert_allclose(q0.covariance, np.diag([4 / 12, 16 / 12]))
    with pytest.raises(ConfigError):
        DefensiveKernel.uniform_box([0.0], [0.0])


def test_json_roundtrip(rng):
    _, p, _ = _proposal(rng, m=3)
    doc = json.loads(p.to_json())
    q = IncrementalProposal.from_dict(doc)
    x = rng.standard_normal((5, 2))
    np.testing.assert_allclose(q.log_density(x), p.log_density(x), rtol=1e-12)
    assert sum(doc["weights"]) == pytest.approx(1.0)
    box = IncrementalProposal.initial(DefensiveKernel.uniform_box([0, 0], [1, 1]), 0.5)
    assert IncrementalProposal.from_dict(box.to_dict()).defensive.kind == "uniform_box"
