"""SVG agreement heatmaps and graymap mask overlays."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .agreement import CR_ORIENTATION, AgreementMatrix
from .io import to_gray_bytes
from .maps import BinaryMask

LOW = (255, 255, 255)
HIGH = (178, 24, 43)
MISSING = (200, 200, 200)

CELL = 64
MARGIN_LEFT = 150
MARGIN_TOP = 150


def heat_color(value: float) -> tuple[int, int, int]:
    """Linear white-to-dark-red ramp, each channel rounded half up."""
    if math.isnan(value):
        return MISSING
    v = min(max(float(value), 0.0), 1.0)
    return tuple(int(math.floor(lo + v * (hi - lo) + 0.5)) for lo, hi in zip(LOW, HIGH))


def heatmap_svg(matrix: AgreementMatrix, labels=None, title: str | None = None) -> str:
    names = list(labels or matrix.methods)
    k = len(names)
    width = MARGIN_LEFT + k * CELL + 20
    height = MARGIN_TOP + k * CELL + 40
    title = title or f"{matrix.metric.upper()} agreement"
    note = f"CR orientation: {CR_ORIENTATION}" if matrix.metric == "cr" else "IoU is symmetric"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f"<title>{escape(title)}</title>",
        f'<desc>{escape(note)}; n_images={matrix.n_images}</desc>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="rgb(255,255,255)"/>',
        f'<text x="{MARGIN_LEFT}" y="24" font-size="16">{escape(title)}</text>',
    ]
    for i, name in enumerate(names):
        y = MARGIN_TOP + i * CELL + CELL // 2
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{y}" font-size="12" text-anchor="end" '
                   f'dominant-baseline="middle">{escape(name)}</text>')
        x = MARGIN_LEFT + i * CELL + CELL // 2
        out.append(f'<text x="{x}" y="{MARGIN_TOP - 8}" font-size="12" '
                   f'transform="rotate(-45 {x} {MARGIN_TOP - 8})">{escape(name)}</text>')
    for i in range(k):
        for j in range(k):
            v = float(matrix.values[i, j])
            r, g, b = heat_color(v)
            x, y = MARGIN_LEFT + j * CELL, MARGIN_TOP + i * CELL
            label = "NA" if math.isnan(v) else f"{v:.2f}"
            ink = "rgb(255,255,255)" if not math.isnan(v) and v > 0.6 else "rgb(0,0,0)"
            out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                       f'fill="rgb({r},{g},{b})" stroke="rgb(255,255,255)"/>')
            out.append(f'<text x="{x + CELL // 2}" y="{y + CELL // 2}" font-size="13" '
                       f'text-anchor="middle" dominant-baseline="middle" fill="{ink}">{label}</text>')
    out.append(f'<text x="{MARGIN_LEFT}" y="{height - 14}" font-size="10">{escape(note)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_heatmap(matrix: AgreementMatrix, path, labels=None, title: str | None = None) -> str:
    svg = heatmap_svg(matrix, labels, title)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)
    return svg


def overlay(image, mask) -> np.ndarray:
    """Masked pixels blended halfway toward white: v -> (v + 1) / 2."""
    img = np.asarray(image, dtype=np.float64)
    m = mask.values if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    if img.shape != m.shape:
        raise ValueError(f"image shape {img.shape} differs from mask shape {m.shape}")
    return np.where(m, 0.5 * img + 0.5, img)


def render_overlay(image, mask, path) -> np.ndarray:
    """Write the overlay as a P5 graymap and return its bytes as a uint8 grid."""
    g = to_gray_bytes(overlay(image, mask))
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + g.tobytes())
    return g
