"""Pure NumPy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np
from scipy.special import logsumexp

# caps the (chunk, M, d) temporaries
_CHUNK_ELEMS = 1 << 21


def _whitened(points, means, chol_inv):
    # (n, M, d): chol_inv[m] @ (points[i] - means[m])
    diff = points[:, None, :] - means[None, :, :]
    return np.einsum("mij,nmj->nmi", chol_inv, diff, optimize=True)


def component_logpdf(points, means, chol_inv, log_coef):
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    M = means.shape[0]
    out = np.empty((n, M))
    step = max(1, _CHUNK_ELEMS // max(1, M * d))
    for start in range(0, n, step):
        z = _whitened(points[start:start + step], means, chol_inv)
        out[start:start + step] = log_coef[None, :] - 0.5 * np.einsum("nmi,nmi->nm", z, z)
    return out


def mixture_logpdf(points, means, chol_inv, log_coef):
    if means.shape[0] == 0:
        return np.full(np.asarray(points).shape[0], -np.inf)
    comp = component_logpdf(points, means, chol_inv, log_coef)
    with np.errstate(divide="ignore"):
        return logsumexp(comp, axis=1)


def sq_mahalanobis(points, center, chol_inv):
    z = (np.asarray(points, dtype=np.float64) - center) @ chol_inv.T
    return np.einsum("ij,ij->i", z, z)


def mh_scan(log_w_prop, log_u, log_w_current, log_threshold, first_adapt):
    B = len(log_w_prop)
    idx = np.empty(B, dtype=np.int64)
    cur = -1
    stop = -1
    lw_list = log_w_prop.tolist()
    lu_list = log_u.tolist()
    with np.errstate(invalid="ignore"):
        for k in range(B):
            lw = lw_list[k]
            if lu_list[k] <= lw - log_w_current:
                log_w_current = lw
                cur = k
            idx[k] = cur
            if k >= first_adapt and lw > log_threshold:
                stop = k
                break
    if stop >= 0:
        idx = idx[:stop + 1]
    return idx, stop


def kde_logpdf(queries, samples, log_sample_weights, bandwidths):
    queries = np.asarray(queries, dtype=np.float64)
    q, d = queries.shape
    n = samples.shape[0]
    inv_h = 1.0 / bandwidths
    const = -np.sum(np.log(bandwidths)) - 0.5 * d * np.log(2.0 * np.pi)
    scaled = samples * inv_h
    out = np.empty(q)
    step = max(1, _CHUNK_ELEMS // max(1, n * d))
    for start in range(0, q, step):
        zq = queries[start:start + step] * inv_h
        sq = np.zeros((zq.shape[0], n))
        for j in range(d):
            sq += (zq[:, j, None] - scaled[None, :, j]) ** 2
        out[start:start + step] = const + logsumexp(log_sample_weights[None, :] - 0.5 * sq, axis=1)
    return out
