from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FILL_VALUE = 0.5


@dataclass(frozen=True)
class SegmentGrid:
    ids: np.ndarray  # (H, W) int, contiguous ids in [0, n_segments)
    n_segments: int

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.intp)
        present = np.unique(ids)
        if not np.array_equal(present, np.arange(self.n_segments)):
            raise ValueError("segment ids must cover [0, n_segments) with no empty segment")
        object.__setattr__(self, "ids", ids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape


def segment_grid(image_size: int, grid_side: int) -> SegmentGrid:
    """Regular ``grid_side x grid_side`` partition with row-major ids."""
    if grid_side < 1 or image_size % grid_side:
        raise ValueError(f"grid_side {grid_side} does not divide image_size {image_size}")
    cell = image_size // grid_side
    r = np.arange(image_size) // cell
    return SegmentGrid(r[:, None] * grid_side + r[None, :], grid_side * grid_side)


def mask_images(image: np.ndarray, segments: SegmentGrid, coalitions: np.ndarray,
                fill: float = FILL_VALUE) -> np.ndarray:
    """One image per coalition row: segments flagged 0 are replaced by ``fill``."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape != segments.shape:
        raise ValueError(f"image shape {image.shape} does not match segment grid {segments.shape}")
    keep = np.asarray(coalitions, dtype=bool)[:, segments.ids]
    return np.where(keep, image[None], fill)


def broadcast_segments(values: np.ndarray, segments: SegmentGrid) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)[segments.ids]
