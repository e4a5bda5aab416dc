"""Kinematic signature records and their normalization.

A :class:`SignatureRecord` holds raw device samples.  Rendering and the DTW
baseline both work on a :class:`NormalizedRecord`, where coordinates are
scaled into the unit square (aspect preserved) and stylus pressure into
``[0, 1]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyRecord, KindMismatch


class InputKind(str, enum.Enum):
    STYLUS = "stylus"
    FINGER = "finger"


@dataclass(frozen=True)
class SamplePoint:
    x: float
    y: float
    t: float
    p: float = 0.0
    pen_down: Optional[bool] = None  # explicit pen-state column, when present

    def __post_init__(self):
        if self.p < 0:
            raise ValueError(f"negative pressure {self.p}")


@dataclass(frozen=True)
class SignatureRecord:
    subject_id: str
    sample_points: tuple[SamplePoint, ...]
    input_kind: InputKind = InputKind.STYLUS
    source_path: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sample_points", tuple(self.sample_points))
        ts = [s.t for s in self.sample_points]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be non-decreasing")

    def __len__(self):
        return len(self.sample_points)

    def arrays(self):
        """Return ``(x, y, t, p)`` as float arrays."""
        pts = self.sample_points
        return (
            np.array([s.x for s in pts], dtype=float),
            np.array([s.y for s in pts], dtype=float),
            np.array([s.t for s in pts], dtype=float),
            np.array([s.p for s in pts], dtype=float),
        )


@dataclass(frozen=True)
class StrokeGapPolicy:
    max_gap_ms: float = 150.0


@dataclass
class NormalizedRecord:
    """Unit-square coordinates plus normalized pressure and pen strokes.

    ``strokes`` holds inclusive ``(start, stop)`` index pairs.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    strokes: list[tuple[int, int]] = field(default_factory=list)
    input_kind: InputKind = InputKind.STYLUS
    record_id: str = ""

    def __len__(self):
        return len(self.x)

    @property
    def points(self):
        return np.column_stack([self.x, self.y, self.t, self.p])


def _scale_unit(x, y, bbox=None):
    if bbox is None:
        x0, x1 = float(x.min()), float(x.max())
        y0, y1 = float(y.min()), float(y.max())
    else:
        x0, y0, x1, y1 = bbox
    extent = max(x1 - x0, y1 - y0)
    if extent == 0:
        return np.full_like(x, 0.5), np.full_like(y, 0.5)
    xs = (x - x0) / extent if x1 > x0 else np.full_like(x, 0.5)
    ys = (y - y0) / extent if y1 > y0 else np.full_like(y, 0.5)
    return xs, ys


def normalize_spatial(record: SignatureRecord, bbox=None) -> NormalizedRecord:
    """Aspect-preserving min-max scaling of the coordinates into ``[0, 1]``.

    The longer axis spans ``[0, 1]``; a zero-extent axis maps to 0.5.  Pass
    ``bbox=(xmin, ymin, xmax, ymax)`` to scale against a shared box instead
    of the record's own extent.  Pressure is carried through unchanged.
    """
    if len(record.sample_points) == 0:
        raise EmptyRecord(record.source_path or record.subject_id)
    x, y, t, p = record.arrays()
    xs, ys = _scale_unit(x, y, bbox)
    return NormalizedRecord(
        x=xs, y=ys, t=t, p=p,
        input_kind=record.input_kind,
        record_id=record.source_path or record.subject_id,
    )


def normalize_pressure(record: SignatureRecord) -> np.ndarray:
    """Min-max scale pen-down pressure, leaving pen-up samples at exactly 0.

    The minimum is taken over strictly positive samples, so the lightest
    pen-down sample maps to 0 and the heaviest to 1.  Constant pen-down
    pressure maps to 1.
    """
    if record.input_kind is InputKind.FINGER:
        raise KindMismatch("finger input carries no pressure signal")
    p = np.array([s.p for s in record.sample_points], dtype=float)
    out = np.zeros_like(p)
    down = p > 0
    if not down.any():
        return out
    lo, hi = p[down].min(), p[down].max()
    if hi == lo:
        out[down] = 1.0
    else:
        out[down] = (p[down] - lo) / (hi - lo)
    return out


def _pen_down_mask(record: SignatureRecord) -> np.ndarray:
    pts = record.sample_points
    if pts and all(s.pen_down is not None for s in pts):
        return np.array([bool(s.pen_down) for s in pts])
    if record.input_kind is InputKind.FINGER:
        return np.ones(len(pts), dtype=bool)
    return np.array([s.p > 0 for s in pts], dtype=bool)


def segment_strokes(
    record: SignatureRecord, gap_policy: StrokeGapPolicy = StrokeGapPolicy()
) -> list[tuple[int, int]]:
    """Split the record into contiguous pen-down runs.

    Returns inclusive ``(start, stop)`` index pairs.  A run is also broken
    wherever two consecutive samples are more than ``max_gap_ms`` apart.
    """
    down = _pen_down_mask(record)
    t = [s.t for s in record.sample_points]
    strokes = []
    start = None
    for i, is_down in enumerate(down):
        if start is not None and (not is_down or t[i] - t[i - 1] > gap_policy.max_gap_ms):
            strokes.append((start, i - 1))
            start = None
        if is_down and start is None:
            start = i
    if start is not None:
        strokes.append((start, len(down) - 1))
    return strokes


def normalize(
    record: SignatureRecord,
    gap_policy: StrokeGapPolicy = StrokeGapPolicy(),
    bbox=None,
) -> NormalizedRecord:
    """Full normalization: coordinates, pressure (stylus only) and strokes."""
    norm = normalize_spatial(record, bbox=bbox)
    if record.input_kind is InputKind.STYLUS:
        norm.p = normalize_pressure(record)
    else:
        norm.p = np.zeros(len(record.sample_points))
    norm.strokes = segment_strokes(record, gap_policy)
    return norm


def shared_bbox(records: Sequence[SignatureRecord]):
    """Bounding box enclosing every record, for per-pair scaling."""
    xs, ys = [], []
    for r in records:
        x, y, _, _ = r.arrays()
        xs.append(x)
        ys.append(y)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    return float(x.min()), float(y.min()), float(x.max()), float(y.max())
