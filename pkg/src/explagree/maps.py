"""Attribution maps and binary masks."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GRANULARITIES = ("pixel", "patch", "segment")


@dataclass(frozen=True)
class AttributionMap:
    """Real-valued importance grid at pixel resolution.

    ``values`` is (H, W), or (C, H, W) for per-channel maps.  Patch- and
    segment-level maps are stored after upsampling; ``granularity`` records
    where they came from.
    """

    values: np.ndarray
    method: str
    target_class: int = -1
    granularity: str = "pixel"
    image_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim not in (2, 3):
            raise ValueError(f"attribution values must be 2-D or 3-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.method} attribution contains non-finite values")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[-2:]

    def with_values(self, values) -> "AttributionMap":
        return replace(self, values=values)


@dataclass(frozen=True)
class BinaryMask:
    values: np.ndarray  # (H, W) bool
    method: str = ""
    image_id: str = ""
    degenerate: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=bool)
        if v.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.values))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None
