"""Gradient-based attributions: Integrated Gradients and GradientSHAP.

``model`` is anything with ``class_gradient(images, target_class)`` returning
the target-class scores and their input gradients for a batch of images.
"""
from __future__ import annotations

import numpy as np

from ..maps import AttributionMap
from ..rng import make_rng

_BATCH = 256


def _summed_gradient(model, points: np.ndarray, target_class: int) -> np.ndarray:
    total = np.zeros(points.shape[1:])
    for i in range(0, len(points), _BATCH):
        _, g = model.class_gradient(points[i:i + _BATCH], target_class)
        total += g.sum(axis=0)
    return total


def integrated_gradients(model, image, target_class: int, baseline=None, steps: int = 64,
                         image_id: str = "") -> AttributionMap:
    """Midpoint-rule path integral of gradients from ``baseline`` (default black) to ``image``."""
    x = np.asarray(image, dtype=np.float64)
    b = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if b.shape != x.shape:
        raise ValueError(f"baseline shape {b.shape} differs from image shape {x.shape}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if target_class < 0:
        raise ValueError(f"invalid class index {target_class}")
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    delta = x - b
    points = b[None] + alphas[:, None, None] * delta[None]
    grad = _summed_gradient(model, points, target_class)
    return AttributionMap(delta * (grad / steps), "integrated_gradients", int(target_class),
                          "pixel", image_id)


def gradient_shap(model, image, target_class: int, n_samples: int = 64, noise_sigma: float = 0.05,
                  seed: int = 0, baseline=None, image_id: str = "") -> AttributionMap:
    """Expected gradients at noisy random points on the baseline-to-input segment.

    Sample s uses ``b + a_s (x - b) + eps_s`` with ``a_s ~ U(0, 1)`` and
    ``eps_s ~ N(0, noise_sigma^2)`` per pixel.
    """
    x = np.asarray(image, dtype=np.float64)
    b = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if b.shape != x.shape:
        raise ValueError(f"baseline shape {b.shape} differs from image shape {x.shape}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be non-negative, got {noise_sigma}")
    if target_class < 0:
        raise ValueError(f"invalid class index {target_class}")
    rng = make_rng(seed, "gradient_shap")
    alphas = rng.uniform(0.0, 1.0, size=n_samples)
    noise = rng.normal(0.0, 1.0, size=(n_samples,) + x.shape) * noise_sigma
    delta = x - b
    points = b[None] + alphas[:, None, None] * delta[None] + noise
    grad = _summed_gradient(model, points, target_class)
    return AttributionMap(delta * (grad / n_samples), "gradient_shap", int(target_class),
                          "pixel", image_id)
