"""Hot numeric kernels, each in a numba-compiled and a pure-numpy variant.

Every kernel exists twice: ``<name>_np`` (vectorized numpy, always available)
and ``<name>_nb`` (numba ``@njit``, defined whenever numba imports). The
public, unsuffixed names bind to one variant at import time:

* ``USERTOPICS_NUMBA=0`` (also ``false`` / ``off`` / ``no``) forces the numpy
  fallbacks;
* otherwise the numba variants are used whenever numba is importable.

``benchmarks/bench_kernels.py`` times the two variants against each other.

Determinism: parallel loops only write disjoint per-row slots and every
floating-point reduction runs in a fixed serial order, so results do not
depend on thread count. ``fastmath`` is deliberately not used; seeded runs
must reproduce bit for bit.

Sparse arguments are raw CSR arrays (``indptr``/``indices`` int64,
``data`` float64); dense arguments must be C-contiguous float64.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAVE_NUMBA = False

_DISABLED = os.environ.get("USERTOPICS_NUMBA", "").strip().lower() in {
    "0",
    "false",
    "off",
    "no",
}
USING_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USING_NUMBA else "numpy"


# --------------------------------------------------------------------------
# numpy variants
# --------------------------------------------------------------------------


def tf_values_np(indptr, data, log_scale):
    """1 + log(value / row_sum) * log_scale for every stored entry."""
    n_rows = indptr.size - 1
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    sums = np.bincount(rows, weights=data, minlength=n_rows)
    return 1.0 + np.log(data / sums[rows]) * log_scale


def share_values_np(indptr, data):
    """value / row_sum for every stored entry."""
    n_rows = indptr.size - 1
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    sums = np.bincount(rows, weights=data, minlength=n_rows)
    return data / sums[rows]


def csr_matmat_np(indptr, indices, data, dense):
    """CSR @ dense block."""
    n_rows = indptr.size - 1
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    out = np.zeros((n_rows, dense.shape[1]))
    np.add.at(out, rows, data[:, None] * dense[indices])
    return out


def csr_tmatmat_np(indptr, indices, data, n_cols, dense):
    """CSR.T @ dense block."""
    n_rows = indptr.size - 1
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    out = np.zeros((n_cols, dense.shape[1]))
    np.add.at(out, indices, data[:, None] * dense[rows])
    return out


def kmeans_assign_np(points, centroids):
    """Nearest centroid per point (ties to the lowest index).

    Returns (labels int64, squared distance to the assigned centroid).
    """
    n = points.shape[0]
    best = np.full(n, np.inf)
    labels = np.zeros(n, dtype=np.int64)
    for j in range(centroids.shape[0]):
        diff = points - centroids[j]
        d = np.einsum("ij,ij->i", diff, diff)
        closer = d < best
        best[closer] = d[closer]
        labels[closer] = j
    return labels, best


def kmeans_update_np(points, labels, k):
    """Per-cluster coordinate sums and member counts."""
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def dsq_update_np(points, centroid, dsq):
    """In place: dsq[i] = min(dsq[i], ||points[i] - centroid||^2)."""
    diff = points - centroid
    d = np.einsum("ij,ij->i", diff, diff)
    np.minimum(dsq, d, out=dsq)


# --------------------------------------------------------------------------
# numba variants
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def tf_values_nb(indptr, data, log_scale):
        out = np.empty_like(data)
        for i in range(indptr.size - 1):
            s = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                s += data[p]
            for p in range(indptr[i], indptr[i + 1]):
                out[p] = 1.0 + np.log(data[p] / s) * log_scale
        return out

    @njit(cache=True)
    def share_values_nb(indptr, data):
        out = np.empty_like(data)
        for i in range(indptr.size - 1):
            s = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                s += data[p]
            for p in range(indptr[i], indptr[i + 1]):
                out[p] = data[p] / s
        return out

    @njit(cache=True, parallel=True)
    def csr_matmat_nb(indptr, indices, data, dense):
        n_rows = indptr.size - 1
        width = dense.shape[1]
        out = np.zeros((n_rows, width))
        for i in prange(n_rows):
            for p in range(indptr[i], indptr[i + 1]):
                v = data[p]
                j = indices[p]
                for c in range(width):
                    out[i, c] += v * dense[j, c]
        return out

    @njit(cache=True)
    def csr_tmatmat_nb(indptr, indices, data, n_cols, dense):
        width = dense.shape[1]
        out = np.zeros((n_cols, width))
        for i in range(indptr.size - 1):
            for p in range(indptr[i], indptr[i + 1]):
                v = data[p]
                j = indices[p]
                for c in range(width):
                    out[j, c] += v * dense[i, c]
        return out

    @njit(cache=True, parallel=True)
    def kmeans_assign_nb(points, centroids):
        n, dim = points.shape
        k = centroids.shape[0]
        labels = np.zeros(n, dtype=np.int64)
        best = np.empty(n)
        for i in prange(n):
            b = np.inf
            bj = 0
            for j in range(k):
                d = 0.0
                for c in range(dim):
                    t = points[i, c] - centroids[j, c]
                    d += t * t
                if d < b:
                    b = d
                    bj = j
            labels[i] = bj
            best[i] = b
        return labels, best

    @njit(cache=True)
    def kmeans_update_nb(points, labels, k):
        n, dim = points.shape
        sums = np.zeros((k, dim))
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            lab = labels[i]
            counts[lab] += 1
            for c in range(dim):
                sums[lab, c] += points[i, c]
        return sums, counts

    @njit(cache=True, parallel=True)
    def dsq_update_nb(points, centroid, dsq):
        n, dim = points.shape
        for i in prange(n):
            d = 0.0
            for c in range(dim):
                t = points[i, c] - centroid[c]
                d += t * t
            if d < dsq[i]:
                dsq[i] = d


# --------------------------------------------------------------------------
# active bindings
# --------------------------------------------------------------------------

if USING_NUMBA:
    tf_values = tf_values_nb
    share_values = share_values_nb
    csr_matmat = csr_matmat_nb
    csr_tmatmat = csr_tmatmat_nb
    kmeans_assign = kmeans_assign_nb
    kmeans_update = kmeans_update_nb
    dsq_update = dsq_update_nb
else:
    tf_values = tf_values_np
    share_values = share_values_np
    csr_matmat = csr_matmat_np
    csr_tmatmat = csr_tmatmat_np
    kmeans_assign = kmeans_assign_np
    kmeans_update = kmeans_update_np
    dsq_update = dsq_update_np


def warmup():
    """Trigger JIT compilation of every active kernel on tiny inputs."""
    indptr = np.array([0, 2, 3], dtype=np.int64)
    indices = np.array([0, 1, 1], dtype=np.int64)
    data = np.array([1.0, 2.0, 3.0])
    block = np.ones((2, 2))
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [4.0, 4.0]])
    cen = np.array([[0.0, 0.0], [4.0, 4.0]])
    tf_values(indptr, data, 1.0)
    share_values(indptr, data)
    csr_matmat(indptr, indices, data, block)
    csr_tmatmat(indptr, indices, data, 2, block)
    labels, _ = kmeans_assign(pts, cen)
    kmeans_update(pts, labels, 2)
    dsq_update(pts, cen[0], np.full(3, np.inf))
