"""Turn attribution maps into comparable binary masks.

Pipeline: clamp negatives -> average channels -> min-max normalize ->
threshold (Otsu or top-p) -> optional morphological closing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .maps import GRANULARITIES, AttributionMap, BinaryMask

N_BINS = 256
# candidate thresholds: midpoints of a 256-bin partition of [0, 1]
OTSU_CANDIDATES = (np.arange(N_BINS) + 0.5) / N_BINS


@dataclass(frozen=True)
class BinarizeConfig:
    threshold_mode: str = "otsu"
    percentile: float = 0.25
    closing_kernel: int = 3
    closing_applies_to: frozenset = field(default_factory=lambda: frozenset({"pixel"}))

    def __post_init__(self):
        if self.threshold_mode not in ("otsu", "percentile"):
            raise ValueError(f"threshold_mode must be 'otsu' or 'percentile', got {self.threshold_mode!r}")
        if not 0.0 < self.percentile < 1.0:
            raise ValueError(f"percentile must lie strictly inside (0, 1), got {self.percentile}")
        _check_kernel(self.closing_kernel)
        applies = frozenset(self.closing_applies_to)
        unknown = applies - set(GRANULARITIES)
        if unknown:
            raise ValueError(f"unknown granularities in closing_applies_to: {sorted(unknown)}")
        object.__setattr__(self, "closing_applies_to", applies)


def _check_kernel(k) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1 or k % 2 == 0:
        raise ValueError(f"closing kernel must be an odd positive integer, got {k!r}")


def clamp_negatives(amap: AttributionMap) -> AttributionMap:
    return amap.with_values(np.maximum(amap.values, 0.0))


def channel_average(maps) -> np.ndarray:
    """Element-wise mean of a sequence (or leading axis) of equally shaped grids."""
    if isinstance(maps, np.ndarray):
        stack = maps if maps.ndim == 3 else maps[None]
    else:
        grids = [np.asarray(m, dtype=np.float64) for m in maps]
        if not grids:
            raise ValueError("channel_average needs at least one channel")
        shapes = {g.shape for g in grids}
        if len(shapes) != 1:
            raise ValueError(f"channel shapes differ: {sorted(shapes)}")
        stack = np.stack(grids)
    if len(stack) == 1:
        return np.array(stack[0], dtype=np.float64)
    return stack.mean(axis=0)


def normalize_01(grid) -> tuple[np.ndarray, bool]:
    """Min-max scale to [0, 1]; a constant grid maps to zeros with ``degenerate=True``."""
    g = np.asarray(grid, dtype=np.float64)
    lo, hi = g.min(), g.max()
    if hi == lo:
        return np.zeros_like(g), True
    return (g - lo) / (hi - lo), False


def otsu_threshold(grid) -> tuple[float, bool]:
    """Otsu threshold over the 256 bin midpoints of [0, 1].

    Each candidate ``t`` splits pixels into ``v <= t`` and ``v > t``; the
    first (lowest) candidate maximizing the between-class variance wins.  If
    no candidate separates two non-empty classes, returns ``(0.5, True)``.
    """
    idx, _ = _kernels.otsu_index(np.asarray(grid, dtype=np.float64).ravel(), OTSU_CANDIDATES)
    if idx < 0:
        return 0.5, True
    return float(OTSU_CANDIDATES[idx]), False


def percentile_threshold(grid, p: float) -> float:
    """Threshold keeping roughly the top fraction ``p`` of pixels as foreground."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"percentile must lie strictly inside (0, 1), got {p}")
    return float(np.quantile(np.asarray(grid, dtype=np.float64), 1.0 - p))


def morph_close(mask, k: int = 3):
    """Dilation then erosion with a k x k square.

    Dilation treats out-of-bounds as background, erosion as foreground, so
    closing stays extensive at the borders.  Accepts a BinaryMask or a bool
    array and returns the same kind.
    """
    _check_kernel(k)
    arr = mask.values if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    if k == 1:
        out = arr.copy()
    else:
        u8 = np.ascontiguousarray(arr, dtype=np.uint8)
        out = _kernels.erode(_kernels.dilate(u8, k), k).astype(bool)
    if isinstance(mask, BinaryMask):
        return BinaryMask(out, mask.method, mask.image_id, mask.degenerate)
    return out


def upsample_nearest(grid, target_shape: tuple[int, int]) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"upsample_nearest expects a 2-D grid, got shape {g.shape}")
    th, tw = target_shape
    h, w = g.shape
    if th % h or tw % w:
        raise ValueError(f"target {th}x{tw} is not an integer multiple of source {h}x{w}")
    return np.repeat(np.repeat(g, th // h, axis=0), tw // w, axis=1)


def binarize(amap: AttributionMap, cfg: BinarizeConfig | None = None) -> BinaryMask:
    cfg = cfg or BinarizeConfig()
    clamped = clamp_negatives(amap).values
    grid = channel_average(clamped) if clamped.ndim == 3 else clamped
    norm, degenerate = normalize_01(grid)
    if degenerate:
        return BinaryMask(np.zeros(norm.shape, dtype=bool), amap.method, amap.image_id, True)
    if cfg.threshold_mode == "otsu":
        t, degenerate = otsu_threshold(norm)
    else:
        t = percentile_threshold(norm, cfg.percentile)
    mask = BinaryMask(norm > t, amap.method, amap.image_id, degenerate)
    if amap.granularity in cfg.closing_applies_to:
        mask = morph_close(mask, cfg.closing_kernel)
    return mask
