"""Compare the compiled kernels with their NumPy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints the best-of-N time per call for each kernel and backend and the
speed-up of the compiled version, then times a short AIMM run under each
backend in a subprocess.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from aimm import _core

RUN_SNIPPET = """
import time
from aimm.targets import make_banana
from aimm.mixture import DefensiveKernel
from aimm.sampler import AimmConfig, run_aimm
t0 = time.perf_counter()
run_aimm(make_banana(), DefensiveKernel.uniform_box([-50, -100], [50, 20]),
         AimmConfig(iterations=20000, w_star=2.718281828, seed=0, m_max=200, adapt_threshold=True))
print(time.perf_counter() - t0)
"""


def _cases(rng):
    d, M = 2, 200
    a = rng.standard_normal((M, d, d))
    covs = a @ np.transpose(a, (0, 2, 1)) + 0.5 * np.eye(d)
    chol_inv = np.array([np.linalg.inv(np.linalg.cholesky(c)) for c in covs])
    means = rng.standard_normal((M, d)) * 5
    log_coef = np.log(np.full(M, 1.0 / M)) - np.log(2 * np.pi)
    pts = rng.standard_normal((512, d)) * 5
    hist = rng.standard_normal((50000, d))
    kde_s = rng.standard_normal((5000, d))
    kde_q = rng.standard_normal((500, d))
    lw = rng.standard_normal(4096)
    lu = np.log(rng.uniform(size=4096))
    return {
        "mixture_logpdf (512 x 200 comps)": lambda k: k.mixture_logpdf(pts, means, chol_inv, log_coef),
        "sq_mahalanobis (50000 states)": lambda k: k.sq_mahalanobis(hist, means[0], chol_inv[0]),
        "mh_scan (4096 steps)": lambda k: k.mh_scan(lw, lu, 0.0, 1e9, 0),
        "kde_logpdf (500 x 5000)": lambda k: k.kde_logpdf(kde_q, kde_s, np.full(5000, -np.log(5000)),
                                                          np.array([0.3, 0.3])),
    }


def _end_to_end(pure):
    env = dict(os.environ)
    env.pop("AIMM_PURE_PYTHON", None)
    if pure:
        env["AIMM_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", RUN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py = _core.load_backend("python")
    try:
        cy = _core.load_backend("cython")
    except ImportError:
        print("compiled extension not available; only the fallback can be timed")
        cy = None
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, fn in _cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:36s} {t_py:12.3f}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {t_py:12.3f} {t_cy:12.3f} {t_py / t_cy:8.1f}x")
    t_py = _end_to_end(True)
    line = f"f-AIMM banana, 20000 iterations: python {t_py:.2f} s"
    if cy is not None:
        t_cy = _end_to_end(False)
        line += f", cython {t_cy:.2f} s ({t_py / t_cy:.1f}x)"
    print(line)


if __name__ == "__main__":
    main()
