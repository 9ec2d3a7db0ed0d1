"""Synthetic four-class shapes dataset.

Classes: 0 square, 1 disk, 2 horizontal stripes, 3 vertical stripes.  Each
image holds one randomly placed and sized shape (foreground 0.9) on a 0.1
background, plus clipped Gaussian pixel noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import make_rng

CLASS_NAMES = ("square", "disk", "hstripes", "vstripes")
BACKGROUND = 0.1
FOREGROUND = 0.9
NOISE_SIGMA = 0.05
STRIPE_PERIOD = 4


@dataclass(frozen=True)
class ShapesDataset:
    images: np.ndarray  # (N, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return len(self.labels)


def _draw_shape(rng: np.random.Generator, label: int, size: int) -> np.ndarray:
    img = np.full((size, size), BACKGROUND)
    rr, cc = np.mgrid[0:size, 0:size]
    if label == 0:
        side = int(rng.integers(size // 4, size // 2 + 1))
        r0, c0 = rng.integers(0, size - side + 1, size=2)
        img[r0:r0 + side, c0:c0 + side] = FOREGROUND
    elif label == 1:
        radius = float(rng.uniform(size / 8, size / 4))
        cr, cc0 = rng.uniform(radius, size - radius, size=2)
        inside = (rr + 0.5 - cr) ** 2 + (cc + 0.5 - cc0) ** 2 <= radius ** 2
        img[inside] = FOREGROUND
    else:
        side = int(rng.integers(3 * size // 8, 5 * size // 8 + 1))
        r0, c0 = rng.integers(0, size - side + 1, size=2)
        along = rr if label == 2 else cc
        on = (along % STRIPE_PERIOD) < STRIPE_PERIOD // 2
        box = (rr >= r0) & (rr < r0 + side) & (cc >= c0) & (cc < c0 + side)
        img[box & on] = FOREGROUND
    return img


def gen_shapes_dataset(n: int, seed: int, config=None) -> ShapesDataset:
    """Generate ``n`` labelled images, fully determined by ``(n, seed)``.

    Labels cycle through the classes and are then shuffled, so each class
    appears ``n // n_classes`` or one more times.  Pixel values are rounded to
    float32 precision so images survive the native map file format unchanged.
    """
    if n <= 0:
        raise ValueError(f"dataset size must be positive, got {n}")
    size = 32 if config is None else config.image_size
    n_classes = 4 if config is None else config.n_classes
    if not 1 <= n_classes <= len(CLASS_NAMES):
        raise ValueError(f"shapes dataset supports 1..{len(CLASS_NAMES)} classes, got {n_classes}")
    rng = make_rng(seed, "shapes")
    labels = rng.permutation(np.arange(n) % n_classes).astype(np.int64)
    images = np.empty((n, size, size))
    for i, label in enumerate(labels):
        img = _draw_shape(rng, int(label), size)
        img += rng.normal(0.0, NOISE_SIGMA, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    images = images.astype(np.float32).astype(np.float64)
    return ShapesDataset(images=images, labels=labels)
