"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``spmm``, ``scatter_add_rows``, ``window_distinct_counts``)
are bound to the numba versions unless acceleration is disabled; see
``graphfraud._accel``. Both implementations are always importable so tests
and the benchmark can compare them directly.
"""
import numpy as np

from graphfraud._accel import USE_NUMBA, njit


# --- sparse (CSR) times dense -------------------------------------------------

@njit
def _spmm_numba(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    k = x.shape[1]
    out = np.zeros((n, k))
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            a = data[p]
            for c in range(k):
                out[i, c] += a * x[j, c]
    return out


def _spmm_numpy(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    out = np.zeros((n, x.shape[1]))
    if indices.shape[0] == 0:
        return out
    contrib = np.take(x, indices, axis=0)
    contrib *= data[:, None]
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    out[nonempty] = np.add.reduceat(contrib, indptr[nonempty], axis=0)
    return out


# --- scatter-add of edge rows onto nodes ----------------------------------------

@njit
def _scatter_add_rows_numba(index, values, n):
    k = values.shape[1]
    out = np.zeros((n, k))
    for e in range(index.shape[0]):
        r = index[e]
        for c in range(k):
            out[r, c] += values[e, c]
    return out


def _scatter_add_rows_numpy(index, values, n):
    out = np.empty((n, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(index, weights=values[:, c], minlength=n)
    return out


# --- distinct merchants per card inside a +/- window ----------------------------

@njit
def _window_distinct_counts_numba(group, times, keys, n_keys, window):
    # inputs sorted by (group, times)
    m = group.shape[0]
    out = np.zeros(m, dtype=np.int64)
    counts = np.zeros(n_keys, dtype=np.int64)
    lo = 0
    hi = 0
    distinct = 0
    start = 0
    while start < m:
        end = start
        while end < m and group[end] == group[start]:
            end += 1
        lo = start
        hi = start
        for i in range(start, end):
            while hi < end and times[hi] <= times[i] + window:
                if counts[keys[hi]] == 0:
                    distinct += 1
                counts[keys[hi]] += 1
                hi += 1
            while times[lo] < times[i] - window:
                counts[keys[lo]] -= 1
                if counts[keys[lo]] == 0:
                    distinct -= 1
                lo += 1
            out[i] = distinct
        for p in range(lo, hi):
            counts[keys[p]] -= 1
        distinct = 0
        start = end
    return out


def _window_distinct_counts_numpy(group, times, keys, n_keys, window):
    m = group.shape[0]
    out = np.zeros(m, dtype=np.int64)
    if m == 0:
        return out
    # composite key keeps each search inside its own group
    span = int(times.max() - times.min()) + 2 * int(window) + 1
    composite = group.astype(np.int64) * span + (times - times.min())
    lo = np.searchsorted(composite, composite - window, side="left")
    hi = np.searchsorted(composite, composite + window, side="right")
    for i in range(m):
        out[i] = np.unique(keys[lo[i]:hi[i]]).shape[0]
    return out


if USE_NUMBA:
    spmm = _spmm_numba
    scatter_add_rows = _scatter_add_rows_numba
    window_distinct_counts = _window_distinct_counts_numba
else:
    spmm = _spmm_numpy
    scatter_add_rows = _scatter_add_rows_numpy
    window_distinct_counts = _window_distinct_counts_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
