"""Numerical kernels behind the samplers and diagnostics.

The compiled extension ``_kernels`` is used when it is importable; otherwise
the NumPy implementations in ``_fallback`` are used. Setting the environment
variable ``AIMM_PURE_PYTHON=1`` forces the fallback.
"""

import importlib
import os

_NAMES = ("component_logpdf", "mixture_logpdf", "sq_mahalanobis", "mh_scan", "kde_logpdf")


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("aimm._core._kernels")
    if name == "python":
        return importlib.import_module("aimm._core._fallback")
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("AIMM_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()

component_logpdf = _impl.component_logpdf
mixture_logpdf = _impl.mixture_logpdf
sq_mahalanobis = _impl.sq_mahalanobis
mh_scan = _impl.mh_scan
kde_logpdf = _impl.kde_logpdf

__all__ = ["BACKEND", "load_backend", *_NAMES]
