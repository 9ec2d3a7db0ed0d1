"""Pure numpy implementations of the inner-loop kernels.

Arithmetic follows the same operation order as the compiled module so the
two backends agree bit-for-bit on Otsu and counting results.
"""
from __future__ import annotations

from math import factorial

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def dilate(mask: np.ndarray, k: int) -> np.ndarray:
    r = k // 2
    padded = np.pad(np.asarray(mask, dtype=np.uint8), r, constant_values=0)
    return sliding_window_view(padded, (k, k)).max(axis=(2, 3)).astype(np.uint8)


def erode(mask: np.ndarray, k: int) -> np.ndarray:
    r = k // 2
    padded = np.pad(np.asarray(mask, dtype=np.uint8), r, constant_values=1)
    return sliding_window_view(padded, (k, k)).min(axis=(2, 3)).astype(np.uint8)


def pair_counts(m1: np.ndarray, m2: np.ndarray) -> tuple[int, int, int]:
    a = np.asarray(m1, dtype=bool)
    b = np.asarray(m2, dtype=bool)
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a)), int(np.count_nonzero(b))


def otsu_index(values: np.ndarray, thresholds: np.ndarray) -> tuple[int, float]:
    """First threshold index maximizing between-class variance of ``values <= t`` vs ``> t``.

    Returns ``(-1, 0.0)`` when no threshold splits the values into two
    non-empty classes.
    """
    v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    m = len(thr)
    n = len(v)
    slot = np.searchsorted(thr, v, side="left")
    counts = np.bincount(slot, minlength=m + 1)
    sums = np.bincount(slot, weights=v, minlength=m + 1)
    total = 0.0
    for s in sums:
        total += s
    n0 = np.cumsum(counts)[:m]
    s0 = np.cumsum(sums)[:m]
    n1 = n - n0
    ok = (n0 > 0) & (n1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w0 = n0 / n
        w1 = n1 / n
        d = (total - s0) / n1 - s0 / n0
        var = np.where(ok, w0 * w1 * d * d, 0.0)
    best = int(np.argmax(var))
    if var[best] <= 0.0:
        return -1, 0.0
    return best, float(var[best])


def shapley_table(v: np.ndarray, n_players: int) -> np.ndarray:
    """Exact Shapley values from a value table indexed by coalition bitmask."""
    v = np.asarray(v, dtype=np.float64)
    if len(v) != 1 << n_players:
        raise ValueError(f"value table needs {1 << n_players} entries, got {len(v)}")
    masks = np.arange(1 << n_players)
    sizes = np.zeros(len(masks), dtype=np.int64)
    for i in range(n_players):
        sizes += (masks >> i) & 1
    f = factorial(n_players)
    w = np.array([factorial(t) * factorial(n_players - t - 1) / f for t in range(n_players)])
    phi = np.empty(n_players)
    for i in range(n_players):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(w[sizes[without]] * (v[without | bit] - v[without]))
    return phi
