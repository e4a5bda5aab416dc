"""Deterministic rasterization of normalized signatures to 8-bit grayscale.

Stylus strokes encode pressure as darkness; finger strokes are pure black on
white.  Rasterization is integer-only (Bresenham segments stamped with a
square brush) so identical inputs give identical pixels on every platform.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigInvalid, EncodeFailure, SizeMismatch
from .signal_model import InputKind, NormalizedRecord

BACKGROUND = 255
SEPARATOR_PX = 4
_SUPERSAMPLE = 4


@dataclass(frozen=True)
class RenderConfig:
    canvas_px: int = 512
    margin_fraction: float = 0.05
    stroke_width_px: int = 2
    ink_floor: float = 0.25
    background_value: int = BACKGROUND
    antialias: bool = False
    flip_y: bool = False
    shared_scale: bool = False  # pairs scaled against a common bounding box

    def validate(self):
        if not isinstance(self.canvas_px, int) or self.canvas_px < 32:
            raise ConfigInvalid(f"canvas_px must be an integer >= 32, got {self.canvas_px!r}")
        if not 0 <= self.margin_fraction < 0.5:
            raise ConfigInvalid(f"margin_fraction must lie in [0, 0.5), got {self.margin_fraction}")
        if not isinstance(self.stroke_width_px, int) or self.stroke_width_px < 1:
            raise ConfigInvalid(f"stroke_width_px must be >= 1, got {self.stroke_width_px!r}")
        if not 0 <= self.ink_floor <= 1:
            raise ConfigInvalid(f"ink_floor must lie in [0, 1], got {self.ink_floor}")
        if self.background_value != BACKGROUND:
            raise ConfigInvalid("background_value is fixed at 255")
        inner = self.canvas_px - 2 * math.ceil(self.margin_fraction * self.canvas_px)
        if inner < self.stroke_width_px:
            raise ConfigInvalid("margin leaves no room for a stroke")
        return self

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RenderedImage:
    pixels: np.ndarray  # (height, width) uint8, row-major
    source_id: str = ""
    config_digest: str = ""

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RenderedImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


def ink_value(p_mean: float, ink_floor: float) -> int:
    """Gray level for a stylus segment of mean normalized pressure."""
    v = 255.0 * (1.0 - (ink_floor + (1.0 - ink_floor) * p_mean))
    return int(min(255, max(0, math.floor(v + 0.5))))


def _bresenham(x0, y0, x1, y1):
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield x0, y0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _to_pixels(record: NormalizedRecord, size: int, margin_px: int, width: int,
               flip_y: bool, centre: bool):
    lo = margin_px + (width - 1) // 2
    hi = size - 1 - margin_px - width // 2
    span = hi - lo
    x = np.asarray(record.x, dtype=float)
    y = np.asarray(record.y, dtype=float)
    if flip_y:
        y = 1.0 - y
    if centre:
        x = x + (1.0 - (x.max() + x.min())) / 2 if x.max() - x.min() < 1 else x
        y = y + (1.0 - (y.max() + y.min())) / 2 if y.max() - y.min() < 1 else y
    col = np.floor(lo + x * span + 0.5).astype(np.int64)
    row = np.floor(lo + y * span + 0.5).astype(np.int64)
    return np.clip(col, lo, hi), np.clip(row, lo, hi)


def _draw(canvas, col, row, strokes, values, width):
    a, b = -((width - 1) // 2), width // 2

    def stamp(c, r, v):
        patch = canvas[r + a:r + b + 1, c + a:c + b + 1]
        np.minimum(patch, v, out=patch)

    for (start, stop), vals in zip(strokes, values):
        if start == stop:
            stamp(int(col[start]), int(row[start]), vals[0])
            continue
        for i in range(start, stop):
            for c, r in _bresenham(int(col[i]), int(row[i]), int(col[i + 1]), int(row[i + 1])):
                stamp(c, r, vals[i - start])


def _segment_values(record: NormalizedRecord, kind: InputKind, ink_floor: float):
    values = []
    p = np.asarray(record.p, dtype=float)
    for start, stop in record.strokes:
        if kind is InputKind.FINGER:
            n = max(1, stop - start)
            values.append([0] * n)
        elif stop == start:
            values.append([ink_value(p[start], ink_floor)])
        else:
            values.append([ink_value((p[i] + p[i + 1]) / 2.0, ink_floor) for i in range(start, stop)])
    return values


def render_signature(record: NormalizedRecord, kind: InputKind | None = None,
                     cfg: RenderConfig = RenderConfig()) -> RenderedImage:
    """Rasterize a normalized record onto a square white canvas.

    Each pen stroke is drawn as line segments between consecutive samples.
    Stylus segments take a gray level from the mean pressure of their two
    endpoints; finger segments are black.  Where strokes overlap the darker
    value wins.  With ``antialias`` the drawing is done at 4x resolution and
    box-filtered down with integer rounding.
    """
    cfg.validate()
    kind = InputKind(kind if kind is not None else record.input_kind)
    factor = _SUPERSAMPLE if cfg.antialias else 1
    size = cfg.canvas_px * factor
    width = cfg.stroke_width_px * factor
    margin_px = math.ceil(cfg.margin_fraction * cfg.canvas_px) * factor
    canvas = np.full((size, size), BACKGROUND, dtype=np.uint8)
    if len(record):
        col, row = _to_pixels(record, size, margin_px, width, cfg.flip_y,
                              centre=not cfg.shared_scale)
        _draw(canvas, col, row, record.strokes, _segment_values(record, kind, cfg.ink_floor), width)
    if factor > 1:
        blocks = canvas.reshape(cfg.canvas_px, factor, cfg.canvas_px, factor).astype(np.int64)
        total = blocks.sum(axis=(1, 3))
        canvas = ((total + factor * factor // 2) // (factor * factor)).astype(np.uint8)
    return RenderedImage(canvas, record.record_id, cfg.digest())


def _chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)


def encode_png(image: RenderedImage) -> bytes:
    """Encode as 8-bit grayscale, non-interlaced PNG.

    Every row uses filter type 0 and the stream is deflated at level 9 with
    no ancillary chunks, so equal pixel buffers give equal bytes.
    """
    px = np.asarray(image.pixels)
    if px.ndim != 2 or px.dtype != np.uint8 or px.size == 0:
        raise EncodeFailure(f"expected a non-empty 2-D uint8 buffer, got {px.dtype} {px.shape}")
    h, w = px.shape
    raw = np.zeros((h, w + 1), dtype=np.uint8)
    raw[:, 1:] = px
    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", header)
        + _chunk(b"IDAT", zlib.compress(raw.tobytes(), 9))
        + _chunk(b"IEND", b"")
    )


class PairMode(str, enum.Enum):
    TWO_ATTACHMENTS = "two_attachments"
    SIDE_BY_SIDE = "side_by_side"


def compose_pair(reference: RenderedImage, probe: RenderedImage,
                 mode: PairMode = PairMode.TWO_ATTACHMENTS) -> list[RenderedImage]:
    mode = PairMode(mode)
    if mode is PairMode.TWO_ATTACHMENTS:
        return [reference, probe]
    if reference.pixels.shape != probe.pixels.shape:
        raise SizeMismatch(f"{reference.pixels.shape} vs {probe.pixels.shape}")
    h = reference.height
    sep = np.full((h, SEPARATOR_PX), BACKGROUND, dtype=np.uint8)
    joined = np.hstack([reference.pixels, sep, probe.pixels])
    return [RenderedImage(joined, f"{reference.source_id}|{probe.source_id}", reference.config_digest)]
