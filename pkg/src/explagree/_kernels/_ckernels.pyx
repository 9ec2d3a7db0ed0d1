# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner-loop kernels: morphology, mask counting, Otsu scan, Shapley enumeration."""

import numpy as np

from libc.math cimport tgamma


def dilate(mask, int k):
    cdef const unsigned char[:, :] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    cdef int r = k // 2
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    cdef Py_ssize_t i, j, a, b
    cdef unsigned char hit
    for i in range(h):
        for j in range(w):
            hit = 0
            for a in range(max(i - r, 0), min(i + r + 1, h)):
                for b in range(max(j - r, 0), min(j + r + 1, w)):
                    if m[a, b]:
                        hit = 1
                        break
                if hit:
                    break
            out[i, j] = hit
    return out_arr


def erode(mask, int k):
    # out-of-bounds neighbours count as foreground, so only in-bounds cells are checked
    cdef const unsigned char[:, :] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    cdef int r = k // 2
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    cdef Py_ssize_t i, j, a, b
    cdef unsigned char keep
    for i in range(h):
        for j in range(w):
            keep = 1
            for a in range(max(i - r, 0), min(i + r + 1, h)):
                for b in range(max(j - r, 0), min(j + r + 1, w)):
                    if not m[a, b]:
                        keep = 0
                        break
                if not keep:
                    break
            out[i, j] = keep
    return out_arr


cdef _as_flags(m):
    arr = np.asarray(m)
    if arr.dtype != np.bool_:
        arr = arr != 0
    return np.ascontiguousarray(arr).view(np.uint8).ravel()


def pair_counts(m1, m2):
    cdef const unsigned char[::1] a = _as_flags(m1)
    cdef const unsigned char[::1] b = _as_flags(m2)
    if a.shape[0] != b.shape[0]:
        raise ValueError("mask sizes differ")
    cdef Py_ssize_t i, n = a.shape[0]
    cdef long inter = 0, n1 = 0, n2 = 0
    for i in range(n):
        n1 += a[i]
        n2 += b[i]
        inter += a[i] & b[i]
    return int(inter), int(n1), int(n2)


def otsu_index(values, thresholds):
    v_arr = np.ascontiguousarray(values, dtype=np.float64).ravel()
    thr_arr = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef const double[:] v = v_arr
    cdef const double[:] thr = thr_arr
    cdef Py_ssize_t n = v.shape[0], m = thr.shape[0], i, j
    slot_arr = np.searchsorted(thr_arr, v_arr, side="left").astype(np.intp)
    cdef const Py_ssize_t[:] slot = slot_arr
    counts_arr = np.zeros(m + 1, dtype=np.int64)
    sums_arr = np.zeros(m + 1, dtype=np.float64)
    cdef long long[:] counts = counts_arr
    cdef double[:] sums = sums_arr
    for i in range(n):
        counts[slot[i]] += 1
        sums[slot[i]] += v[i]
    cdef double total = 0.0
    for j in range(m + 1):
        total += sums[j]
    cdef long long n0 = 0, n1
    cdef double s0 = 0.0, w0, w1, d, var, best_var = 0.0
    cdef Py_ssize_t best = 0
    cdef bint first = True
    for j in range(m):
        n0 += counts[j]
        s0 += sums[j]
        n1 = n - n0
        if n0 > 0 and n1 > 0:
            w0 = <double>n0 / n
            w1 = <double>n1 / n
            d = (total - s0) / n1 - s0 / n0
            var = w0 * w1 * d * d
        else:
            var = 0.0
        if first or var > best_var:
            best_var = var
            best = j
            first = False
    if best_var <= 0.0:
        return -1, 0.0
    return int(best), float(best_var)


def shapley_table(v, int n_players):
    cdef const double[:] val = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n_masks = (<Py_ssize_t>1) << n_players
    if val.shape[0] != n_masks:
        raise ValueError(f"value table needs {n_masks} entries, got {val.shape[0]}")
    w_arr = np.empty(max(n_players, 1), dtype=np.float64)
    cdef double[:] w = w_arr
    cdef int t
    cdef double fact_s = tgamma(n_players + 1.0)
    for t in range(n_players):
        w[t] = tgamma(t + 1.0) * tgamma(n_players - t) / fact_s
    phi_arr = np.zeros(n_players, dtype=np.float64)
    cdef double[:] phi = phi_arr
    cdef Py_ssize_t mask, bit
    cdef int i, size
    for i in range(n_players):
        bit = (<Py_ssize_t>1) << i
        for mask in range(n_masks):
            if mask & bit:
                continue
            size = 0
            t = 0
            while t < n_players:
                size += (mask >> t) & 1
                t += 1
            phi[i] += w[size] * (val[mask | bit] - val[mask])
    return phi_arr
