"""Pairwise agreement between binary masks: IoU and Coverage Ratio.

Conventions: two empty masks have IoU 1.0.  CR(m1, m2) with an empty ``m1``
is undefined; such pairs are left out of aggregates and counted.  In a CR
matrix, row i / column j holds CR(mask_i, mask_j), i.e. how much of the row
method's mask is covered by the column method's mask.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .maps import BinaryMask

METRICS = ("iou", "cr")
CR_ORIENTATION = "row = covered mask (m1), column = covering mask (m2)"


class UndefinedCoverageError(ValueError):
    """CR requested for an empty covered mask."""


def _arrays(m1, m2) -> tuple[np.ndarray, np.ndarray]:
    a = m1.values if isinstance(m1, BinaryMask) else np.asarray(m1, dtype=bool)
    b = m2.values if isinstance(m2, BinaryMask) else np.asarray(m2, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def iou(m1, m2) -> float:
    inter, n1, n2 = _kernels.pair_counts(*_arrays(m1, m2))
    union = n1 + n2 - inter
    if union == 0:
        return 1.0
    return inter / union


def cr(m1, m2) -> float:
    inter, n1, _ = _kernels.pair_counts(*_arrays(m1, m2))
    if n1 == 0:
        raise UndefinedCoverageError("coverage ratio is undefined for an empty covered mask")
    return inter / n1


@dataclass
class AgreementMatrix:
    metric: str
    methods: tuple[str, ...]
    values: np.ndarray  # (K, K), NaN where no pair was counted
    n_pairs_counted: np.ndarray  # (K, K) int
    n_images: int = 1

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.methods = tuple(self.methods)
        k = len(self.methods)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.n_pairs_counted = np.asarray(self.n_pairs_counted, dtype=np.int64)
        if self.values.shape != (k, k) or self.n_pairs_counted.shape != (k, k):
            raise ValueError(f"matrix shapes must be ({k}, {k})")
        finite = self.values[~np.isnan(self.values)]
        if np.any((finite < 0) | (finite > 1)):
            raise ValueError("agreement values must lie in [0, 1]")

    @property
    def n_excluded(self) -> np.ndarray:
        return self.n_images - self.n_pairs_counted

    def get(self, row: str, col: str) -> float:
        return float(self.values[self.methods.index(row), self.methods.index(col)])


def pairwise_matrices(masks: Sequence[BinaryMask] | Mapping[str, BinaryMask]):
    """IoU and CR matrices for one image, one mask per method."""
    if isinstance(masks, Mapping):
        methods, arrays = list(masks.keys()), list(masks.values())
    else:
        methods, arrays = [m.method for m in masks], list(masks)
    k = len(arrays)
    if k < 2:
        raise ValueError(f"need >=2 methods for pairwise agreement, got {k}")
    if len(set(methods)) != k:
        raise ValueError(f"duplicate method ids: {methods}")
    arrays = [m.values if isinstance(m, BinaryMask) else np.asarray(m, dtype=bool) for m in arrays]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"mask dimensions differ: {sorted(shapes)}")

    iou_v = np.empty((k, k))
    cr_v = np.full((k, k), np.nan)
    cr_n = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(i, k):
            inter, ni, nj = _kernels.pair_counts(arrays[i], arrays[j])
            union = ni + nj - inter
            iou_v[i, j] = iou_v[j, i] = 1.0 if union == 0 else inter / union
            if ni:
                cr_v[i, j], cr_n[i, j] = inter / ni, 1
            if nj:
                cr_v[j, i], cr_n[j, i] = inter / nj, 1
    return (AgreementMatrix("iou", methods, iou_v, np.ones((k, k), dtype=np.int64)),
            AgreementMatrix("cr", methods, cr_v, cr_n))


def _mean(matrices: Sequence[AgreementMatrix]) -> AgreementMatrix:
    first = matrices[0]
    total = np.zeros_like(first.values)
    counts = np.zeros_like(first.n_pairs_counted)
    n_images = 0
    for m in matrices:
        if m.methods != first.methods or m.metric != first.metric:
            raise ValueError("cannot aggregate matrices with different metrics or method lists")
        included = m.n_pairs_counted > 0
        total = total + np.where(included, np.nan_to_num(m.values) * m.n_pairs_counted, 0.0)
        counts = counts + m.n_pairs_counted
        n_images += m.n_images
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    return AgreementMatrix(first.metric, first.methods, values, counts, n_images)


def aggregate(matrices: Sequence[AgreementMatrix], grouping: str = "overall",
              groups: Sequence | None = None):
    """Average matrices over included pairs, summing in input order.

    ``grouping='per_class'`` needs ``groups`` (one key per matrix) and returns
    a dict of key -> matrix, ordered by sorted key.
    """
    matrices = list(matrices)
    if not matrices:
        raise ValueError("aggregate needs at least one matrix")
    if grouping == "overall":
        return _mean(matrices)
    if grouping != "per_class":
        raise ValueError(f"grouping must be 'overall' or 'per_class', got {grouping!r}")
    if groups is None or len(groups) != len(matrices):
        raise ValueError("per_class aggregation needs one group key per matrix")
    buckets: dict = {}
    for key, m in zip(groups, matrices):
        buckets.setdefault(key, []).append(m)
    return {key: _mean(buckets[key]) for key in sorted(buckets)}
