import math

import numpy as np
import pytest

from aimm.errors import ConfigError, EmptyHistory, TooFewPoints
from aimm.gaussian import make_gaussian
from aimm.mixture import DefensiveKernel, IncrementalProposal
from aimm.sampler import (AimmConfig, ThresholdAdapter, acceptance_log_prob, adapt_threshold, aimm_step,
                          build_neighborhood, init_chain, make_increment, run_aimm)
from aimm.targets import TargetDensity, make_banana, make_gaussian_target, make_trimodal_1d
from aimm.trace import TraceRecorder
from oracles import neighborhood_scan


# acceptance ----------------------------------------------------------------------------

def test_acceptance_log_prob_examples():
    assert acceptance_log_prob(1.3, 1.3) == 0.0
    assert acceptance_log_prob(math.log(2.0), 0.0) == 0.0
    assert acceptance_log_prob(0.0, math.log(2.0)) == pytest.approx(-math.log(2.0))
    assert acceptance_log_prob(-math.inf, 0.0) == -math.inf
    assert acceptance_log_prob(0.0, -math.inf) == 0.0
    assert acceptance_log_prob(-math.inf, -math.inf) == -math.inf


# neighborhood --------------------------------------------------------------------------

def _chain_like(rng, n, d, dup_prob=0.4):
    """Random states with runs of repeated rows, as produced by rejections."""
    out = [rng.standard_normal(d)]
    for _ in range(n - 1):
        out.append(out[-1] if rng.random() < dup_prob else rng.standard_normal(d) * 2)
    return np.array(out)


def test_neighborhood_matches_exhaustive_scan(rng):
    for trial in range(100):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(3, 60))
        states = _chain_like(rng, n, d) if trial % 2 else rng.standard_normal((n, d)) * 2
        a = rng.standard_normal((d, d))
        cov = a @ a.T + 0.5 * np.eye(d)
        x = rng.standard_normal(d)
        log_pi = float(rng.normal(-3, 2))
        tau, rho = 0.5, int(rng.integers(0, 50))
        _, idx = build_neighborhood(states, x, log_pi, tau, rho, cov, return_indices=True)
        bound = tau * rho * math.exp(log_pi)
        assert list(idx) == neighborhood_scan(states, x, bound, cov, d + 2)


def test_neighborhood_euclidean_with_identity_metric(rng):
    states = rng.standard_normal((50, 2))
    x = np.zeros(2)
    nb, idx = build_neighborhood(states, x, math.log(0.4), 0.5, 5, np.eye(2), return_indices=True)
    want = np.flatnonzero(np.linalg.norm(states, axis=1) <= 1.0)
    assert len(want) >= 4
    np.testing.assert_array_equal(idx, want)


def test_zero_density_falls_back_to_nearest(rng):
    states = rng.standard_normal((30, 2))
    nb = build_neighborhood(states, np.zeros(2), -math.inf, 0.5, 10, np.eye(2))
    order = np.argsort(np.linalg.norm(states, axis=1))
    np.testing.assert_array_equal(np.sort(np.linalg.norm(nb, axis=1)),
                                  np.linalg.norm(states[order[:4]], axis=1))


def test_huge_bound_selects_everything(rng):
    states = rng.standard_normal((20, 3)) * 100
    nb = build_neighborhood(states, np.zeros(3), 800.0, 0.5, 10, np.eye(3))
    assert nb.shape == (20, 3)


def test_fallback_counts_distinct_states():
    # nine copies of one state and three others: d + 2 = 3 distinct states needed
    states = np.array([[0.0]] * 9 + [[1.0], [2.0], [3.0]])
    nb = build_neighborhood(states, np.array([0.0]), -math.inf, 0.5, 1, np.eye(1))
    np.testing.assert_array_equal(nb[:, 0], [0.0] * 9 + [1.0, 2.0])


def test_too_few_distinct_states_returns_all():
    states = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    nb = build_neighborhood(states, np.zeros(2), -math.inf, 0.5, 1, np.eye(2))
    assert nb.shape[0] == 6


def test_neighborhood_scale_knob(rng):
    states = rng.standard_normal((200, 1))
    small = build_neighborhood(states, np.zeros(1), 0.0, 0.5, 2, np.eye(1), scale=0.1)
    big = build_neighborhood(states, np.zeros(1), 0.0, 0.5, 2, np.eye(1))
    assert np.all(np.abs(small) <= 0.1) and len(small) < len(big)


def test_empty_history():
    with pytest.raises(EmptyHistory):
        build_neighborhood(np.zeros((0, 2)), np.zeros(2), 0.0, 0.5, 1, np.eye(2))


# increments -------------------------------------------------------------------------------

def test_increment_from_symmetric_pair_is_regularized():
    nb = np.array([[-1.0, 0.0], [1.0, 0.0]])
    comp, lw = make_increment(nb, np.zeros(2), math.log(0.3), 0.5)
    assert np.all(np.linalg.eigvalsh(comp.covariance) > 0)
    assert comp.covariance[0, 0] == pytest.approx(2.0)
    assert comp.covariance[1, 1] < 1e-6
    np.testing.assert_array_equal(comp.mean, [0.0, 0.0])
    assert lw == pytest.approx(0.5 * math.log(0.3))


def test_increment_weight_ratio():
    nb = np.random.default_rng(0).standard_normal((10, 1))
    p1, p2, gamma = 0.3, 0.02, 0.7
    _, a = make_increment(nb, [0.0], math.log(p1), gamma)
    _, b = make_increment(nb, [0.0], math.log(p2), gamma)
    assert math.exp(a - b) == pytest.approx((p1 / p2) ** gamma, rel=1e-12)
    _, a0 = make_increment(nb, [0.0], math.log(p1), 1e-12)
    _, b0 = make_increment(nb, [0.0], math.log(p2), 1e-12)
    assert math.exp(a0 - b0) == pytest.approx(1.0, abs=1e-10)


def test_increment_fallback_covariance():
    comp, _ = make_increment(np.array([[1.0, 1.0], [1.0, 1.0]]), [1.0, 1.0], 0.0, 0.5, fallback_cov=4 * np.eye(2))
    np.testing.assert_allclose(comp.covariance, 4 * np.eye(2))
    with pytest.raises(TooFewPoints):
        make_increment(np.array([[1.0]]), [1.0], 0.0, 0.5)


# threshold adaptation -------------------------------------------------------------------------

def test_threshold_constant_when_target_equals_proposal(rng):
    t = make_gaussian_target([0.0], [[2.0]])
    p = IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0.0], [[2.0]]), 0.1)
    up = adapt_threshold(p, t, None, 5.0, 1000, rng)
    assert up.w_star == pytest.approx(1.0, abs=1e-12)
    assert up.points.shape == (1000, 1)


def test_threshold_is_999th_order_statistic(rng):
    t = make_trimodal_1d()
    p = IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0.0], [[10.0]]), 0.1)
    state = rng.bit_generator.state
    up = adapt_threshold(p, t, None, 1e9, 1000, rng)
    rng.bit_generator.state = state
    pts = p.propose(rng, 1000)
    lw = np.sort(t.log_density(pts) - p.log_density(pts))
    assert up.w_star == pytest.approx(math.exp(lw[998]), rel=1e-12)


def test_threshold_capped_at_prescribed(rng):
    t = make_trimodal_1d()
    p = IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0.0], [[10.0]]), 0.1)
    assert adapt_threshold(p, t, None, 0.5, 1000, rng).w_star == 0.5


def test_threshold_latch(rng):
    t = make_gaussian_target([0.0], [[2.0]])
    p = IncrementalProposal.initial(DefensiveKernel.gaussian_kernel([0.0], [[2.0]]), 0.1)
    ad = ThresholdAdapter(1.5, batch=200)
    assert ad.update(p, t, rng) is not None
    assert ad.stopped
    assert ad.update(p, t, rng) is None


# chain ---------------------------------------------------------------------------------------

TRIMODAL_Q0 = DefensiveKernel.gaussian_kernel([0.0], [[10.0]])


def _small_cfg(**kw):
    base = dict(iterations=3000, w_star=1.0, n0=300, seed=7)
    base.update(kw)
    return AimmConfig(**base)


def test_step_by_step_equals_blocked_run_with_unit_blocks():
    t = make_trimodal_1d()
    cfg = _small_cfg(block_size=1).resolved(1)
    blocked = run_aimm(t, TRIMODAL_Q0, cfg)
    rng = np.random.default_rng(cfg.seed)
    state, prop = init_chain(t, TRIMODAL_Q0, cfg, rng)
    rec = TraceRecorder("aimm", cfg.iterations, state.x)
    for _ in range(cfg.iterations):
        state, prop = aimm_step(state, prop, t, cfg, rec, rng)
    np.testing.assert_array_equal(rec.states, blocked.states)
    np.testing.assert_array_equal(rec.accepted, blocked.accept_flags)
    assert rec.increments == blocked.increment_iterations
    np.testing.assert_array_equal(rec.n_comp, blocked.component_count_series)
    assert state.accepted_count == int(blocked.accept_flags.sum())


def test_block_size_does_not_change_chain_law():
    t = make_trimodal_1d()
    for bs in (1, 7, 512):
        tr = run_aimm(t, TRIMODAL_Q0, _small_cfg(block_size=bs, iterations=4000))
        assert tr.valid
        inc = set(tr.increment_iterations)
        over = {i for i in range(tr.n_iterations)
                if tr.log_weights_at_proposals[i] > 0.0 and i > 300}
        assert inc == over


def test_increment_trigger_invariant():
    t = make_banana()
    q0 = DefensiveKernel.uniform_box([-50, -100], [50, 20])
    tr = run_aimm(t, q0, AimmConfig(iterations=6000, w_star=math.e, n0=1000, seed=3))
    lw = tr.log_weights_at_proposals
    expected = [i for i in range(tr.n_iterations) if lw[i] > 1.0 and i > 1000]
    assert tr.increment_iterations == expected
    assert tr.n_increments > 0
    cc = tr.component_count_series
    assert np.all(np.diff(cc) >= 0)
    for i in tr.increment_iterations:
        assert cc[i] == cc[i - 1] + 1


def test_weights_use_the_proposal_in_force():
    t = make_trimodal_1d()
    tr = run_aimm(t, TRIMODAL_Q0, _small_cfg(iterations=2500, keep_snapshots=True))
    snaps = dict(tr.snapshots)
    gen_at = {}
    current = snaps[-1]
    for i in range(tr.n_iterations):
        gen_at[i] = current
        if i in snaps:
            current = snaps[i]
    for i in range(0, tr.n_iterations, 7):
        q = gen_at[i]
        x = tr.proposal_points[i]
        want = tr.log_target_at_proposals[i] - q.log_density(x)
        assert tr.log_weights_at_proposals[i] == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_windowed_snapshots_match_the_running_proposal():
    t = make_trimodal_1d()
    tr = run_aimm(t, TRIMODAL_Q0, _small_cfg(iterations=2500, keep_snapshots=True, m_max=5))
    assert len(tr.snapshots) == tr.n_increments + 1
    x = np.linspace(-10, 10, 9)[:, None]
    it, last = tr.snapshots[len(tr.snapshots) - 1]
    assert it == tr.increment_iterations[-1]
    np.testing.assert_allclose(last.log_density(x), tr.proposal.log_density(x), rtol=1e-12)
    counts = [p.n_components for _, p in tr.snapshots]
    assert counts[0] == 0 and max(counts) == 5
    assert tr.snapshots.to_dict()["history"]["omega"] == pytest.approx(1 / (1 + 0.1 * tr.n_increments))


def test_frozen_adaptation_never_increments():
    t = make_trimodal_1d()
    tr = run_aimm(t, TRIMODAL_Q0, _small_cfg(n0=math.inf))
    assert tr.n_increments == 0 and tr.final_component_count == 0


def test_zero_iterations():
    tr = run_aimm(make_trimodal_1d(), TRIMODAL_Q0, _small_cfg(iterations=0))
    assert tr.n_iterations == 0 and tr.initial_state.shape == (1,)


def test_same_seed_same_chain():
    t = make_trimodal_1d()
    a = run_aimm(t, TRIMODAL_Q0, _small_cfg())
    b = run_aimm(t, TRIMODAL_Q0, _small_cfg())
    c = run_aimm(t, TRIMODAL_Q0, _small_cfg(seed=8))
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_f_aimm_window_and_threshold_log():
    t = make_banana()
    q0 = DefensiveKernel.uniform_box([-50, -100], [50, 20])
    tr = run_aimm(t, q0, AimmConfig(iterations=8000, w_star=math.exp(0.5), seed=1, m_max=20,
                                    adapt_threshold=True))
    assert tr.sampler == "f_aimm"
    assert tr.component_count_series.max() <= 20
    assert tr.threshold_log and tr.threshold_log[0][0] == 0
    assert all(w <= math.exp(0.5) + 1e-12 for _, w in tr.threshold_log)
    # thresholds are applied from the iteration they were computed at
    for (n, w) in tr.threshold_log:
        assert tr.log_threshold_series[n] == pytest.approx(math.log(w))


def test_config_validation_paths():
    t = make_trimodal_1d()
    for kw, path in [({"gamma": 1.5}, "gamma"), ({"tau": 0.0}, "tau"), ({"kappa": 1.0}, "kappa"),
                     ({"w_star": -1.0}, "w_star"), ({"m_max": 0}, "m_max"), ({"seed": -1}, "seed"),
                     ({"sigma0": np.eye(2)}, "sigma0")]:
        with pytest.raises(ConfigError) as err:
            run_aimm(t, TRIMODAL_Q0, _small_cfg(**kw))
        assert err.value.path == path


def test_defaults_resolve_from_dimension():
    cfg = AimmConfig(iterations=10).resolved(4)
    assert cfg.w_star == 4.0 and cfg.n0 == 2000.0


def test_failure_inside_loop_returns_partial_trace():
    calls = {"n": 0}
    base = make_gaussian_target([0.0], [[1.0]])

    def flaky(x):
        calls["n"] += 1
        if calls["n"] > 3:
            raise FloatingPointError("boom")
        return base.batch_log_density(x)

    t = TargetDensity("flaky", 1, flaky)
    tr = run_aimm(t, DefensiveKernel.gaussian_kernel([0.0], [[1.0]]), AimmConfig(iterations=5000, block_size=8))
    assert not tr.valid and "boom" in tr.error
    assert tr.n_iterations < 5000


def test_frozen_chain_targets_gaussian(rng):
    t = make_gaussian_target([1.0], [[0.5]])
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[4.0]])
    tr = run_aimm(t, q0, AimmConfig(iterations=50000, n0=math.inf, seed=2))
    x = tr.states[1000:, 0]
    assert x.mean() == pytest.approx(1.0, abs=0.03)
    assert x.var() == pytest.approx(0.5, rel=0.05)
