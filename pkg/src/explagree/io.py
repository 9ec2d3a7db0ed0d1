"""Binary and text file formats.

XATT1  attribution map: b"XATT1\\n", u32-LE height, u32-LE width, f32-LE row-major payload.
XMSK1  binary mask:     b"XMSK1\\n", u32-LE height, u32-LE width, one byte (0/1) per pixel.
XVIT1  checkpoint:      b"XVIT1\\n", the seven ViTConfig fields as u32-LE (image_size,
                        patch_size, embed_dim, n_layers, n_heads, n_classes, seed), then
                        every parameter in :func:`explagree.vit.param_layout` order as
                        f64-LE row-major.
P5     binary portable graymap, maxval <= 255.
CSV    agreement matrix: header ``method,<m1>,...,<mK>``, one row per method,
       six decimals, ``NA`` for excluded entries, LF endings, UTF-8.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .agreement import AgreementMatrix
from .maps import AttributionMap, BinaryMask
from .vit import ViTConfig, ViTParams, param_layout

MAP_MAGIC = b"XATT1\n"
MASK_MAGIC = b"XMSK1\n"
CKPT_MAGIC = b"XVIT1\n"
_DIMS = struct.Struct("<II")
_MAX_PIXELS = 1 << 28


class FormatError(ValueError):
    """A file does not follow its declared format."""


def _check_magic(data: bytes, magic: bytes, path) -> None:
    head = data[:len(magic)]
    if head != magic:
        raise FormatError(f"{path}: bad magic {head!r}, expected {magic!r}")


def _read_dims(data: bytes, offset: int, path, bytes_per_pixel: int) -> tuple[int, int]:
    if len(data) < offset + _DIMS.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    h, w = _DIMS.unpack_from(data, offset)
    if h == 0 or w == 0 or h * w > _MAX_PIXELS:
        raise FormatError(f"{path}: dimension overflow or empty grid ({h} x {w})")
    expected = offset + _DIMS.size + h * w * bytes_per_pixel
    if len(data) < expected:
        raise FormatError(f"{path}: truncated payload, {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes after payload")
    return h, w


def encode_map(grid) -> bytes:
    g = np.asarray(grid.values if isinstance(grid, AttributionMap) else grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"only 2-D maps can be written, got shape {g.shape}")
    h, w = g.shape
    return MAP_MAGIC + _DIMS.pack(h, w) + g.astype("<f4").tobytes()


def decode_map(data: bytes, path="<bytes>") -> np.ndarray:
    _check_magic(data, MAP_MAGIC, path)
    h, w = _read_dims(data, len(MAP_MAGIC), path, 4)
    payload = np.frombuffer(data, dtype="<f4", offset=len(MAP_MAGIC) + _DIMS.size, count=h * w)
    return payload.astype(np.float64).reshape(h, w)


def write_map(path, grid) -> None:
    Path(path).write_bytes(encode_map(grid))


def read_map(path) -> np.ndarray:
    return decode_map(Path(path).read_bytes(), path)


def encode_mask(mask) -> bytes:
    m = np.asarray(mask.values if isinstance(mask, BinaryMask) else mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError(f"only 2-D masks can be written, got shape {m.shape}")
    h, w = m.shape
    return MASK_MAGIC + _DIMS.pack(h, w) + m.astype(np.uint8).tobytes()


def write_mask(path, mask) -> None:
    Path(path).write_bytes(encode_mask(mask))


def read_mask(path) -> np.ndarray:
    data = Path(path).read_bytes()
    _check_magic(data, MASK_MAGIC, path)
    h, w = _read_dims(data, len(MASK_MAGIC), path, 1)
    payload = np.frombuffer(data, dtype=np.uint8, offset=len(MASK_MAGIC) + _DIMS.size, count=h * w)
    if np.any(payload > 1):
        raise FormatError(f"{path}: mask bytes must be 0 or 1")
    return payload.astype(bool).reshape(h, w)


def to_gray_bytes(image) -> np.ndarray:
    """Quantize [0, 1] floats to 0..255, rounding half up."""
    v = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def write_pgm(path, image) -> None:
    g = to_gray_bytes(image)
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + g.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary graymap to floats in [0, 1]."""
    data = Path(path).read_bytes()
    _check_magic(data, b"P5", path)
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated graymap header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric graymap header {tokens!r}") from exc
    if not 0 < maxval <= 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    if w <= 0 or h <= 0 or w * h > _MAX_PIXELS:
        raise FormatError(f"{path}: dimension overflow or empty image ({w} x {h})")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise FormatError(f"{path}: truncated raster, {len(raster)} of {w * h} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w) / float(maxval)


def read_image(path) -> np.ndarray:
    """Load a P5 graymap or a native XATT1 grid."""
    head = Path(path).read_bytes()[:6]
    if head == MAP_MAGIC:
        return read_map(path)
    if head[:2] == b"P5":
        return read_pgm(path)
    raise FormatError(f"{path}: unrecognized image format, leading bytes {head!r}")


def write_checkpoint(path, params: ViTParams) -> None:
    cfg = params.config
    parts = [CKPT_MAGIC, struct.pack("<7I", *cfg.as_tuple())]
    for name, _, _ in param_layout(cfg):
        parts.append(np.ascontiguousarray(params.arrays[name], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> ViTParams:
    data = Path(path).read_bytes()
    _check_magic(data, CKPT_MAGIC, path)
    off = len(CKPT_MAGIC)
    if len(data) < off + 28:
        raise FormatError(f"{path}: truncated checkpoint header")
    try:
        cfg = ViTConfig(*struct.unpack_from("<7I", data, off))
    except ValueError as exc:
        raise FormatError(f"{path}: invalid model configuration: {exc}") from exc
    off += 28
    layout = param_layout(cfg)
    expected = off + 8 * sum(math.prod(shape) for _, shape, _ in layout)
    if len(data) != expected:
        raise FormatError(f"{path}: checkpoint is {len(data)} bytes, expected {expected}")
    arrays = {}
    for name, shape, _ in layout:
        n = math.prod(shape)
        arrays[name] = np.frombuffer(data, dtype="<f8", offset=off, count=n).astype(np.float64).reshape(shape)
        off += 8 * n
    return ViTParams(cfg, arrays)


def format_matrix_csv(matrix: AgreementMatrix, names=None) -> str:
    names = list(names or matrix.methods)
    lines = [",".join(["method"] + names)]
    for name, row in zip(names, matrix.values):
        cells = ["NA" if math.isnan(v) else f"{v:.6f}" for v in row]
        lines.append(",".join([name] + cells))
    return "\n".join(lines) + "\n"


def write_matrix_csv(matrix: AgreementMatrix, path, names=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_matrix_csv(matrix, names))


def read_matrix_csv(path, metric: str) -> AgreementMatrix:
    with open(path, encoding="utf-8", newline="") as f:
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    if not rows or rows[0][0] != "method":
        raise FormatError(f"{path}: missing 'method' header")
    methods = rows[0][1:]
    if len(rows) != len(methods) + 1 or any(len(r) != len(methods) + 1 for r in rows[1:]):
        raise FormatError(f"{path}: matrix is not square")
    values = np.array([[math.nan if c == "NA" else float(c) for c in r[1:]] for r in rows[1:]])
    counts = (~np.isnan(values)).astype(np.int64)
    return AgreementMatrix(metric, methods, values, counts)
