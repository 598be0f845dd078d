# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror :mod:`aimm._core._fallback` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _whitened_sq(const double* x, const double* mu, const double* linv,
                                double* diff, Py_ssize_t d) noexcept nogil:
    # linv is a row-major lower-triangular d x d factor
    cdef Py_ssize_t i, j
    cdef double acc, total = 0.0
    for i in range(d):
        diff[i] = x[i] - mu[i]
    for i in range(d):
        acc = 0.0
        for j in range(i + 1):
            acc += linv[i * d + j] * diff[j]
        total += acc * acc
    return total


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def component_logpdf(points, means, chol_inv, log_coef):
    """(n, M) matrix of log_coef[m] + log N(points[i]; means[m], cov[m]) up to the
    normalising constant folded into ``log_coef``."""
    cdef const double[:, ::1] P = _contig(points)
    cdef const double[:, ::1] MU = _contig(means)
    cdef const double[:, :, ::1] L = _contig(chol_inv)
    cdef const double[::1] C = _contig(log_coef)
    cdef Py_ssize_t n = P.shape[0], d = P.shape[1], M = MU.shape[0]
    cdef Py_ssize_t i, m
    out_arr = np.empty((n, M), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] diff = np.empty(max(d, 1), dtype=np.float64)
    if n == 0 or M == 0:
        return out_arr
    with nogil:
        for i in range(n):
            for m in range(M):
                out[i, m] = C[m] - 0.5 * _whitened_sq(&P[i, 0], &MU[m, 0], &L[m, 0, 0], &diff[0], d)
    return out_arr


def mixture_logpdf(points, means, chol_inv, log_coef):
    """Row-wise log-sum-exp of :func:`component_logpdf` without the (n, M) temporary."""
    cdef const double[:, ::1] P = _contig(points)
    cdef const double[:, ::1] MU = _contig(means)
    cdef const double[:, :, ::1] L = _contig(chol_inv)
    cdef const double[::1] C = _contig(log_coef)
    cdef Py_ssize_t n = P.shape[0], d = P.shape[1], M = MU.shape[0]
    cdef Py_ssize_t i, m
    cdef double e, mx, s
    out_arr = np.full(n, -np.inf, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] diff = np.empty(max(d, 1), dtype=np.float64)
    if n == 0 or M == 0:
        return out_arr
    with nogil:
        for i in range(n):
            mx = -INFINITY
            s = 0.0
            for m in range(M):
                if C[m] == -INFINITY:
                    continue
                e = C[m] - 0.5 * _whitened_sq(&P[i, 0], &MU[m, 0], &L[m, 0, 0], &diff[0], d)
                if e > mx:
                    s = s * exp(mx - e) + 1.0
                    mx = e
                elif e > mx - 40.0:
                    # smaller terms cannot change s >= 1 in double precision
                    s += exp(e - mx)
            out[i] = mx + log(s) if s > 0.0 else -INFINITY
    return out_arr


def sq_mahalanobis(points, center, chol_inv):
    cdef const double[:, ::1] P = _contig(points)
    cdef const double[::1] c = _contig(center)
    cdef const double[:, ::1] L = _contig(chol_inv)
    cdef Py_ssize_t n = P.shape[0], d = P.shape[1], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] diff = np.empty(max(d, 1), dtype=np.float64)
    if n == 0:
        return out_arr
    with nogil:
        for i in range(n):
            out[i] = _whitened_sq(&P[i, 0], &c[0], &L[0, 0], &diff[0], d)
    return out_arr


def mh_scan(const double[:] log_w_prop, const double[:] log_u, double log_w_current,
            double log_threshold, Py_ssize_t first_adapt):
    """Sequential independence-MH accept/reject over a block of proposals.

    Returns ``(current_index, stop)``: ``current_index[k]`` is the block index of the
    chain state after step k (-1 for the state carried into the block); ``stop`` is
    the index of the first step at or after ``first_adapt`` whose proposal log-weight
    exceeds ``log_threshold`` (that step is fully processed), or -1.
    """
    cdef Py_ssize_t B = log_w_prop.shape[0], k
    cdef Py_ssize_t cur = -1, stop = -1
    cdef double lw
    idx_arr = np.empty(B, dtype=np.int64)
    cdef cnp.int64_t[:] idx = idx_arr
    with nogil:
        for k in range(B):
            lw = log_w_prop[k]
            if log_u[k] <= lw - log_w_current:
                log_w_current = lw
                cur = k
            idx[k] = cur
            if k >= first_adapt and lw > log_threshold:
                stop = k
                break
    if stop >= 0:
        idx_arr = idx_arr[:stop + 1]
    return idx_arr, stop


def kde_logpdf(const double[:, :] queries, const double[:, :] samples,
               const double[:] log_sample_weights, const double[:] bandwidths):
    """Product-Gaussian KDE log-density; sample weights must already be normalised."""
    cdef Py_ssize_t q = queries.shape[0], n = samples.shape[0], d = samples.shape[1]
    cdef Py_ssize_t a, i, j
    cdef double mx, s, e, t, const_term = 0.0
    cdef double[:] inv_h = np.empty(d, dtype=np.float64)
    for j in range(d):
        inv_h[j] = 1.0 / bandwidths[j]
        const_term += -log(bandwidths[j]) - 0.9189385332046727
    out_arr = np.empty(q, dtype=np.float64)
    cdef double[:] out = out_arr
    with nogil:
        for a in range(q):
            mx = -INFINITY
            s = 0.0
            for i in range(n):
                e = 0.0
                for j in range(d):
                    t = (queries[a, j] - samples[i, j]) * inv_h[j]
                    e += t * t
                e = log_sample_weights[i] - 0.5 * e
                if e > mx:
                    s = s * exp(mx - e) + 1.0
                    mx = e
                else:
                    s += exp(e - mx)
            out[a] = const_term + mx + log(s)
    return out_arr
