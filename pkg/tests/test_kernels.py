import os
import subprocess
import sys

import numpy as np
import pytest

from aimm import _core

py = _core.load_backend("python")
try:
    cy = _core.load_backend("cython")
except ImportError:
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _factors(rng, M, d):
    a = rng.standard_normal((M, d, d))
    covs = a @ np.transpose(a, (0, 2, 1)) + 0.3 * np.eye(d)
    chol_inv = np.array([np.linalg.inv(np.linalg.cholesky(c)) for c in covs])
    log_coef = rng.standard_normal(M) - 0.5 * d * np.log(2 * np.pi)
    return rng.standard_normal((M, d)) * 3, chol_inv, log_coef


@needs_cython
@pytest.mark.parametrize("d", [1, 2, 5])
def test_component_and_mixture_logpdf_agree(rng, d):
    means, chol_inv, log_coef = _factors(rng, 7, d)
    pts = rng.standard_normal((50, d)) * 4
    np.testing.assert_allclose(cy.component_logpdf(pts, means, chol_inv, log_coef),
                               py.component_logpdf(pts, means, chol_inv, log_coef), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cy.mixture_logpdf(pts, means, chol_inv, log_coef),
                               py.mixture_logpdf(pts, means, chol_inv, log_coef), rtol=1e-12, atol=1e-12)


@needs_cython
def test_mixture_logpdf_empty(rng):
    pts = rng.standard_normal((4, 2))
    empty = (np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0))
    assert np.all(cy.mixture_logpdf(pts, *empty) == -np.inf)
    assert np.all(py.mixture_logpdf(pts, *empty) == -np.inf)


@needs_cython
def test_sq_mahalanobis_agrees(rng):
    _, chol_inv, _ = _factors(rng, 1, 3)
    pts = rng.standard_normal((30, 3))
    c = rng.standard_normal(3)
    np.testing.assert_allclose(cy.sq_mahalanobis(pts, c, chol_inv[0]), py.sq_mahalanobis(pts, c, chol_inv[0]),
                               rtol=1e-12)


@needs_cython
@pytest.mark.parametrize("first_adapt", [0, 10, 1000])
def test_mh_scan_agrees(rng, first_adapt):
    lw = rng.standard_normal(300)
    lw[rng.integers(0, 300, 5)] = -np.inf
    lu = np.log(rng.uniform(size=300))
    a = cy.mh_scan(lw, lu, 0.2, 1.5, first_adapt)
    b = py.mh_scan(lw, lu, 0.2, 1.5, first_adapt)
    assert a[1] == b[1]
    np.testing.assert_array_equal(a[0], b[0])


@needs_cython
@pytest.mark.parametrize("d", [1, 3])
def test_kde_logpdf_agrees(rng, d):
    s = rng.standard_normal((80, d))
    lw = np.log(np.full(80, 1 / 80))
    h = rng.uniform(0.2, 1.0, d)
    q = rng.standard_normal((20, d)) * 3
    np.testing.assert_allclose(cy.kde_logpdf(q, s, lw, h), py.kde_logpdf(q, s, lw, h), rtol=1e-12)


def test_mh_scan_semantics():
    # accepted proposals become current; scanning stops at the first trigger past first_adapt
    lw = np.array([0.0, 2.0, -5.0, 3.0, 1.0])
    lu = np.array([-1.0, -1.0, -1.0, -1.0, -1.0])
    idx, stop = py.mh_scan(lw, lu, 0.5, 2.5, 2)
    assert stop == 3
    np.testing.assert_array_equal(idx, [0, 1, 1, 3])
    idx, stop = py.mh_scan(lw, lu, 0.5, 10.0, 0)
    assert stop == -1 and len(idx) == 5


_SCRIPT = """
import hashlib, numpy as np
from aimm import _core
from aimm.targets import make_trimodal_1d
from aimm.mixture import DefensiveKernel
from aimm.sampler import AimmConfig, run_aimm
tr = run_aimm(make_trimodal_1d(), DefensiveKernel.gaussian_kernel([0.0], [[10.0]]),
              AimmConfig(iterations=3000, w_star=1.0, n0=500, seed=3))
print(_core.BACKEND, tr.n_increments, hashlib.sha1(np.round(tr.states, 9).tobytes()).hexdigest())
"""


def _run_with(env_value):
    env = dict(os.environ)
    env.pop("AIMM_PURE_PYTHON", None)
    if env_value is not None:
        env["AIMM_PURE_PYTHON"] = env_value
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split()


def test_environment_forces_fallback():
    assert _run_with("1")[0] == "python"


@needs_cython
def test_backends_give_the_same_chain():
    a, b = _run_with(None), _run_with("1")
    assert a[0] == "cython" and b[0] == "python"
    assert a[1:] == b[1:]
