import math

import numpy as np
import pytest

from aimm.baselines import (AgmConfig, AgmParams, AmhConfig, RunningCovariance, default_rwmh_scale,
                            online_em_update, psd_floor, run_agm, run_amh, run_im, run_rwmh)
from aimm.errors import ConfigError
from aimm.gaussian import empirical_covariance
from aimm.mixture import DefensiveKernel
from aimm.sampler import AimmConfig, run_aimm
from aimm.targets import make_banana, make_gaussian_target


@pytest.fixture
def normal():
    return make_gaussian_target([0.0], [[1.0]])


def test_rwmh_recovers_unit_variance(normal):
    tr = run_rwmh(normal, [[2.38 ** 2]], 100000, seed=1, x0=[0.0])
    assert tr.states[1000:].var() == pytest.approx(1.0, abs=0.1)
    assert np.all(np.isnan(tr.log_weights_at_proposals))


def test_rwmh_symmetric_acceptance(normal):
    # with a symmetric kernel the acceptance depends on the target ratio only:
    # uphill moves are always taken, and the acceptance frequency of downhill
    # moves matches the mean target ratio
    tr = run_rwmh(normal, [[1.0]], 50000, seed=0, x0=[0.0])
    prev = np.concatenate([[0.0], tr.states[:-1, 0]])
    log_ratio = tr.log_target_at_proposals - normal.log_density(prev[:, None])
    assert np.all(tr.accept_flags[log_ratio >= 0])
    down = log_ratio < 0
    assert tr.accept_flags[down].mean() == pytest.approx(np.exp(log_ratio[down]).mean(), abs=0.01)
    np.testing.assert_array_equal(tr.states[tr.accept_flags, 0], tr.proposal_points[tr.accept_flags, 0])


def test_rwmh_default_scale():
    np.testing.assert_allclose(default_rwmh_scale(np.eye(2) * 3), 2.38 ** 2 / 2 * 3 * np.eye(2))


def test_rwmh_rejects_zero_scale(normal):
    with pytest.raises(ConfigError):
        run_rwmh(normal, [[0.0]], 10)


def test_im_is_frozen_aimm(normal):
    q0 = DefensiveKernel.gaussian_kernel([0.5], [[3.0]])
    a = run_im(normal, q0, 3000, seed=4)
    b = run_aimm(normal, q0, AimmConfig(iterations=3000, seed=4, n0=math.inf))
    np.testing.assert_array_equal(a.states, b.states)
    assert a.sampler == "im"


def test_im_with_exact_proposal_accepts_everything(normal):
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[1.0]])
    tr = run_im(normal, q0, 2000, seed=0)
    assert tr.acceptance_rate == 1.0


def test_im_on_banana_with_uniform_kernel_rarely_accepts():
    tr = run_im(make_banana(), DefensiveKernel.uniform_box([-50, -100], [50, 20]), 20000, seed=0)
    assert 0.002 < tr.acceptance_rate < 0.05


def test_amh_with_p_one_is_rwmh(normal):
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[4.0]])
    a = run_amh(normal, AmhConfig(sigma0=[[1.3]], iterations=5000, p_fixed=1.0, seed=9, n0=100), q0=q0)
    b = run_rwmh(normal, [[1.3]], 5000, seed=9, q0=q0)
    np.testing.assert_array_equal(a.states, b.states)


def test_amh_scaling_default():
    cfg = AmhConfig(sigma0=np.eye(2), iterations=1).resolved(2)
    assert cfg.s_d == pytest.approx(2.88)


def test_amh_recursive_covariance_matches_batch():
    t = make_banana()
    seen = []

    def check(n, run):
        if n % 997 == 0 and n >= 2:
            seen.append((n, run.covariance.copy()))

    tr = run_amh(t, AmhConfig(sigma0=np.diag([100.0, 10.0]), iterations=6000, n0=500, seed=2, x0=[0.0, 10.0]),
                 checkpoint=check)
    assert seen
    for n, cov in seen:
        # Gamma_n is built from X_1..X_n
        np.testing.assert_allclose(cov, empirical_covariance(tr.states[:n]), rtol=1e-10, atol=1e-10)


def test_amh_before_warmup_uses_sigma0(normal):
    # with n0 beyond the run length every move uses sigma0, so AMH equals RWMH whatever p is
    a = run_amh(normal, AmhConfig(sigma0=[[0.7]], iterations=2000, p_fixed=0.05, n0=5000, seed=3, x0=[0.0]))
    b = run_rwmh(normal, [[0.7]], 2000, seed=3, x0=[0.0])
    np.testing.assert_array_equal(a.states, b.states)


def test_amh_validation(normal):
    with pytest.raises(ConfigError):
        run_amh(normal, AmhConfig(sigma0=[[1.0]], iterations=10, p_fixed=0.0))
    with pytest.raises(ConfigError):
        run_amh(normal, AmhConfig(sigma0=[[1.0]], iterations=10, s_d=-1.0))


def test_running_covariance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 3)) * [1, 10, 100] + 1e3
    rc = RunningCovariance(3)
    for row in x:
        rc.push(row)
    np.testing.assert_allclose(rc.covariance, np.cov(x.T), rtol=1e-10)


def test_online_update_keeps_simplex():
    rng = np.random.default_rng(1)
    p = AgmParams(np.array([0.2, 0.3, 0.5]), rng.standard_normal((3, 2)), np.repeat(np.eye(2)[None], 3, axis=0))
    for n in range(1, 200):
        x = rng.standard_normal(2) * 3
        comp = np.log(p.weights) + np.array([-0.5 * np.sum((x - m) ** 2) for m in p.means])
        online_em_update(p, x, 1.0 / (n + 1), comp)
        assert p.weights.sum() == pytest.approx(1.0) and np.all(p.weights >= 0)
        assert all(np.linalg.eigvalsh(c).min() > 0 for c in p.covs)


def test_psd_floor():
    c = psd_floor(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-3)
    assert np.linalg.eigvalsh(c).min() >= 1e-3 - 1e-12


def test_agm_single_component_mean_tracks_chain():
    t = make_gaussian_target([2.0, -1.0], [[1.0, 0.3], [0.3, 0.5]])
    q0 = DefensiveKernel.gaussian_kernel([0.0, 0.0], 4 * np.eye(2))
    tr = run_agm(t, AgmConfig(1, q0, 100000, init_cov=4 * np.eye(2), seed=0))
    mean = tr.proposal.means[0]
    chain_mean = tr.states.mean(axis=0)
    assert np.all(np.abs(mean - chain_mean) <= 0.05 * np.maximum(1.0, np.abs(chain_mean)))
    assert tr.proposal.weights.tolist() == [1.0]


def test_agm_trace_schema():
    t = make_banana()
    q0 = DefensiveKernel.uniform_box([-50, -100], [50, 20])
    tr = run_agm(t, AgmConfig(4, q0, 500, seed=1))
    assert tr.states.shape == (500, 2) and tr.component_count_series.tolist() == [4] * 500
    assert np.all(np.isfinite(tr.log_target_at_proposals))
    with pytest.raises(ConfigError):
        run_agm(t, AgmConfig(0, q0, 10))


def test_samplers_are_deterministic(normal):
    q0 = DefensiveKernel.gaussian_kernel([0.0], [[4.0]])
    for run in (lambda: run_rwmh(normal, [[1.0]], 500, 5, q0=q0),
                lambda: run_amh(normal, AmhConfig(sigma0=[[1.0]], iterations=500, n0=50, seed=5), q0=q0),
                lambda: run_agm(normal, AgmConfig(2, q0, 500, seed=5))):
        np.testing.assert_array_equal(run().states, run().states)
