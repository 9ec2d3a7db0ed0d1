from __future__ import annotations

import numpy as np

from ..maps import AttributionMap
from ..rng import make_rng
from .segments import FILL_VALUE, SegmentGrid, broadcast_segments, mask_images


def weighted_ridge(z: np.ndarray, y: np.ndarray, weights: np.ndarray,
                   ridge_lambda: float) -> tuple[np.ndarray, float]:
    """Weighted ridge regression with an unpenalized intercept.

    Solved as an augmented least-squares problem; returns (coefficients, intercept).
    """
    z = np.asarray(z, dtype=np.float64)
    n, s = z.shape
    sw = np.sqrt(np.asarray(weights, dtype=np.float64))
    design = np.hstack([np.ones((n, 1)), z]) * sw[:, None]
    penalty = np.hstack([np.zeros((s, 1)), np.sqrt(ridge_lambda) * np.eye(s)])
    a = np.vstack([design, penalty])
    rhs = np.concatenate([np.asarray(y, dtype=np.float64) * sw, np.zeros(s)])
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    return sol[1:], float(sol[0])


def lime_weights(z: np.ndarray, kernel_width: float) -> np.ndarray:
    """Exponential kernel on the fraction of segments switched off."""
    frac_off = 1.0 - np.asarray(z, dtype=np.float64).mean(axis=1)
    return np.exp(-(frac_off ** 2) / kernel_width ** 2)


def _target_column(probs: np.ndarray, target_class: int, n_rows: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or len(probs) != n_rows:
        raise ValueError(f"predict_fn must return ({n_rows}, n_classes), got shape {probs.shape}")
    if not 0 <= target_class < probs.shape[1]:
        raise ValueError(f"class index {target_class} outside [0, {probs.shape[1]})")
    return probs[:, target_class]


def lime_attribution(predict_fn, image, target_class: int, segments: SegmentGrid,
                     n_samples: int = 200, ridge_lambda: float = 0.01, kernel_width: float = 0.5,
                     seed: int = 0, image_id: str = "") -> AttributionMap:
    """Local linear surrogate over segment on/off flags.

    The first sample keeps every segment; the rest are independent fair coin
    flips.  Switched-off segments are filled with mid-gray.  Signed
    per-segment coefficients are broadcast back to pixels.
    """
    s = segments.n_segments
    if s < 1:
        raise ValueError("empty segment set")
    if n_samples < s + 2:
        raise ValueError(f"n_samples={n_samples} too small for {s} segments: the regression needs >= {s + 2}")
    if target_class < 0:
        raise ValueError(f"invalid class index {target_class}")
    if kernel_width <= 0 or ridge_lambda < 0:
        raise ValueError("kernel_width must be positive and ridge_lambda non-negative")
    rng = make_rng(seed, "lime")
    z = rng.integers(0, 2, size=(n_samples, s)).astype(np.float64)
    z[0] = 1.0
    y = _target_column(predict_fn(mask_images(image, segments, z, FILL_VALUE)), target_class, n_samples)
    coef, _ = weighted_ridge(z, y, lime_weights(z, kernel_width), ridge_lambda)
    return AttributionMap(broadcast_segments(coef, segments), "lime", int(target_class),
                          "segment", image_id)
