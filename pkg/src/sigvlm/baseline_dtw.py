"""DTW reference verifier over position and velocity time functions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptySeries, TooShort
from .signal_model import NormalizedRecord, SignatureRecord, StrokeGapPolicy, normalize

FEATURE_NAMES = ("x", "y", "dx", "dy")


@dataclass
class FeatureSeries:
    rows: np.ndarray  # (n, 4)

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path_length: int

    @property
    def normalized_distance(self) -> float:
        return self.distance / self.path_length


def _zscore(col: np.ndarray) -> np.ndarray:
    sd = col.std()
    if sd <= 1e-12 * max(1.0, abs(col.mean())):
        return np.zeros_like(col)
    return (col - col.mean()) / sd


def derive_features(record: NormalizedRecord) -> FeatureSeries:
    """Stack ``[x, y, dx, dy]`` and z-score every channel.

    The first difference is repeated at the front so the series keeps the
    record's length.  Constant channels become zeros.
    """
    n = len(record)
    if n < 2:
        raise TooShort(f"need at least 2 points, got {n}")
    x = np.asarray(record.x, dtype=float)
    y = np.asarray(record.y, dtype=float)
    dx = np.diff(x)
    dy = np.diff(y)
    dx = np.concatenate([dx[:1], dx])
    dy = np.concatenate([dy[:1], dy])
    rows = np.column_stack([_zscore(c) for c in (x, y, dx, dy)])
    return FeatureSeries(rows)


SMALL_CELLS = 20_000


def _as_rows(s) -> np.ndarray:
    rows = np.asarray(s.rows if isinstance(s, FeatureSeries) else s, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    return rows


def dtw_distance(a, b, band: Optional[int] = None) -> DtwResult:
    """Classic DTW with steps (1,1), (1,0), (0,1) and Euclidean local cost.

    Accepts :class:`FeatureSeries` or array-likes (1-D input is treated as
    single-feature rows).  Ties prefer the diagonal, then (1,0), then (0,1);
    ``path_length`` counts the cells on the chosen path.  ``band`` is an
    optional Sakoe-Chiba half-width in samples, measured against the
    rescaled diagonal.
    """
    A, B = _as_rows(a), _as_rows(b)
    n, m = len(A), len(B)
    if n == 0 or m == 0:
        raise EmptySeries("both series must be non-empty")
    if band is None and n * m <= SMALL_CELLS:
        distance, length = _dtw_python(A.tolist(), B.tolist())
    else:
        distance, length = _dtw_numpy(A, B, band)
    if not math.isfinite(distance):
        raise EmptySeries("band too narrow: no admissible warping path")
    return DtwResult(distance, length)


def _dtw_python(A: list, B: list) -> tuple[float, int]:
    # row-by-row recurrence; cheaper than numpy for short series
    m = len(B)
    inf = math.inf
    prev_d = [inf] * m
    prev_l = [0] * m
    one_d = len(A[0]) == 1
    if one_d:
        A = [r[0] for r in A]
        B = [r[0] for r in B]
    for i, ra in enumerate(A):
        cur_d = [inf] * m
        cur_l = [0] * m
        if one_d:
            costs = [abs(ra - rb) for rb in B]
        else:
            costs = [math.sqrt(sum((x - y) * (x - y) for x, y in zip(ra, rb))) for rb in B]
        for j, c in enumerate(costs):
            if i == 0 and j == 0:
                cur_d[0], cur_l[0] = c, 1
                continue
            best, blen = inf, 0
            if i and j:
                best, blen = prev_d[j - 1], prev_l[j - 1]
            if i and prev_d[j] < best:
                best, blen = prev_d[j], prev_l[j]
            if j and cur_d[j - 1] < best:
                best, blen = cur_d[j - 1], cur_l[j - 1]
            cur_d[j] = c + best
            cur_l[j] = blen + 1
        prev_d, prev_l = cur_d, cur_l
    return prev_d[-1], prev_l[-1]


def _dtw_numpy(A: np.ndarray, B: np.ndarray, band: Optional[int]) -> tuple[float, int]:
    # each anti-diagonal depends only on the two before it, so it is
    # evaluated as one vector operation
    n, m = len(A), len(B)
    cost = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))
    if band is not None:
        i, j = np.indices((n, m))
        scale = (m - 1) / (n - 1) if n > 1 else 0.0
        cost = np.where(np.abs(j - i * scale) <= band, cost, np.inf)

    D = np.full((n, m), np.inf)
    L = np.zeros((n, m), dtype=np.int64)
    D[0, 0] = cost[0, 0]
    L[0, 0] = 1
    for k in range(1, n + m - 1):
        i = np.arange(max(0, k - m + 1), min(n - 1, k) + 1)
        j = k - i
        diag = np.full(len(i), np.inf)
        up = np.full(len(i), np.inf)     # from (i-1, j): step (1,0)
        left = np.full(len(i), np.inf)   # from (i, j-1): step (0,1)
        ld = np.zeros(len(i), dtype=np.int64)
        lu = np.zeros(len(i), dtype=np.int64)
        ll = np.zeros(len(i), dtype=np.int64)
        ok = (i > 0) & (j > 0)
        diag[ok] = D[i[ok] - 1, j[ok] - 1]
        ld[ok] = L[i[ok] - 1, j[ok] - 1]
        ok = i > 0
        up[ok] = D[i[ok] - 1, j[ok]]
        lu[ok] = L[i[ok] - 1, j[ok]]
        ok = j > 0
        left[ok] = D[i[ok], j[ok] - 1]
        ll[ok] = L[i[ok], j[ok] - 1]
        take = up < diag
        best = np.where(take, up, diag)
        blen = np.where(take, lu, ld)
        take = left < best
        best = np.where(take, left, best)
        blen = np.where(take, ll, blen)
        D[i, j] = cost[i, j] + best
        L[i, j] = blen + 1
    return float(D[n - 1, m - 1]), int(L[n - 1, m - 1])


def dtw_similarity(normalized_distance: float) -> float:
    return math.exp(-normalized_distance)


def dtw_score(reference: SignatureRecord, probe: SignatureRecord,
              gap_policy: StrokeGapPolicy = StrokeGapPolicy(),
              band: Optional[int] = None) -> float:
    """Similarity in ``(0, 1]``: ``exp(-d)`` of the path-normalized DTW distance."""
    fa = derive_features(normalize(reference, gap_policy))
    fb = derive_features(normalize(probe, gap_policy))
    return dtw_similarity(dtw_distance(fa, fb, band=band).normalized_distance)
