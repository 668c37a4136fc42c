"""Pure geometric rules: box normalization, IoU, depth ordering, left-right.

Everything in here is deterministic and side-effect free. Depth maps must be
canonicalized (larger = farther) before their statistics are taken; the
ordering logic uses comparisons only, so any monotone rescaling of depth
values leaves clear verdicts unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import BBox, DepthConvention, DepthMap, NormalizedBBox

NORM_RANGE = 1000


class GeometryError(ValueError):
    pass


class DegenerateBoxError(GeometryError):
    """Normalization collapsed the box to zero width or height."""


class EmptyRegionError(GeometryError):
    """No valid depth pixels inside the region."""


class DepthOrderValue(enum.Enum):
    A_NEARER = "a_nearer"
    B_NEARER = "b_nearer"
    AMBIGUOUS = "ambiguous"


class QualityClass(enum.Enum):
    A = "A"  # both metrics reliable and consistent
    B = "B"  # only median usable
    C = "C"  # only p90 usable
    D = "D"  # unusable or inconsistent; discarded downstream


class LRValue(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    AMBIGUOUS = "ambiguous"


class Facing(enum.Enum):
    TOWARD = "toward"
    AWAY = "away"


@dataclass(frozen=True, slots=True)
class DepthOrder:
    value: DepthOrderValue
    quality: QualityClass


@dataclass(frozen=True, slots=True)
class DepthStats:
    """Summary of depth values inside one object's box.

    top_decile_valid_fraction: of the pixels whose values rank in the top
    decile of the region (including low-confidence ones), the fraction that
    is both trusted and not an outlier spike. Low values mean the far-side
    structure the p90 leans on is mostly noise.
    """

    median: float
    p90: float
    valid_fraction: float
    dispersion: float
    top_decile_valid_fraction: float


@dataclass(frozen=True, slots=True)
class ReliabilityThresholds:
    min_valid_fraction: float = 0.5
    max_dispersion: float = 0.5


def round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def normalize_coords(b: BBox, width: int, height: int) -> tuple[float, float, float, float]:
    """The bare normalization formula, no rounding: coord / extent * 1000."""
    sx = NORM_RANGE / width
    sy = NORM_RANGE / height
    return (b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy)


def denormalize_coords(
    n: NormalizedBBox, width: int, height: int
) -> tuple[float, float, float, float]:
    sx = width / NORM_RANGE
    sy = height / NORM_RANGE
    return (n.x_min * sx, n.y_min * sy, n.x_max * sx, n.y_max * sy)


def normalize_bbox(b: BBox, width: int, height: int) -> NormalizedBBox:
    """Map a pixel box onto the 0..1000 grid, rounding half-up.

    Raises DegenerateBoxError when rounding collapses a side, so the caller
    can drop the sample.
    """
    x_min, y_min, x_max, y_max = normalize_coords(b, width, height)
    nb = NormalizedBBox(
        round_half_up(x_min),
        round_half_up(y_min),
        round_half_up(x_max),
        round_half_up(y_max),
    )
    if nb.x_min >= nb.x_max or nb.y_min >= nb.y_max:
        raise DegenerateBoxError(f"box {b.as_list()} collapsed to {nb.as_list()}")
    return nb


def denormalize_bbox(n: NormalizedBBox, width: int, height: int) -> BBox:
    return BBox(*denormalize_coords(n, width, height))


def bbox_iou(a, b) -> float:
    """Intersection over union. Accepts BBox or NormalizedBBox."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return inter / union


def region_slice(b: BBox, width: int, height: int) -> tuple[slice, slice]:
    """Rows/cols of pixels whose centers fall inside the box.

    Pixel (i, j) has its center at (j + 0.5, i + 0.5).
    """
    x0 = max(0, math.ceil(b.x_min - 0.5))
    x1 = min(width, math.ceil(b.x_max - 0.5))
    y0 = max(0, math.ceil(b.y_min - 0.5))
    y1 = min(height, math.ceil(b.y_max - 0.5))
    return slice(y0, y1), slice(x0, x1)


def _median_p90(values: np.ndarray) -> tuple[float, float]:
    """Linear-interpolation 50th/90th percentiles of a 1-D array.

    Matches numpy's default percentile method bit-for-bit (the pairwise
    difference is taken in the array's dtype, the interpolation in float64)
    while touching only the four order statistics involved.
    """
    n = values.size
    if n == 1:
        x = float(values[0])
        return x, x
    metas = []
    needed: set[int] = set()
    for q in (0.5, 0.9):
        pos = q * (n - 1)
        lo = int(pos)
        hi = min(lo + 1, n - 1)
        metas.append((lo, hi, pos - lo))
        needed.update((lo, hi))
    work = values.copy()
    work.partition(sorted(needed))
    out = []
    for lo, hi, t in metas:
        step = float(work[hi] - work[lo])
        if t >= 0.5:
            out.append(float(work[hi]) - step * (1.0 - t))
        else:
            out.append(float(work[lo]) + step * t)
    return out[0], out[1]


def depth_stats(d: DepthMap, b: BBox, outlier_mult: float = 4.0) -> DepthStats:
    """Median/p90 depth over the box using linear-interpolation percentiles.

    Requires a canonicalized map (larger = farther). Percentiles and
    dispersion use trusted pixels only; the top-decile hygiene signal ranks
    every finite pixel so untrusted far-side readings count against it.
    An outlier is a value above outlier_mult times the region median.
    """
    if d.convention is not DepthConvention.DISTANCE_INCREASING:
        raise GeometryError("depth map must be canonicalized before depth_stats")
    rows, cols = region_slice(b, d.width, d.height)
    region = d.values[rows, cols]
    n_pixels = region.size
    if n_pixels == 0:
        raise EmptyRegionError(f"box {b.as_list()} covers no pixel centers")

    finite = np.isfinite(region)
    valid = finite
    if d.valid_mask is not None:
        valid = finite & d.valid_mask[rows, cols].astype(bool)
    valid_values = region[valid]
    if valid_values.size == 0:
        raise EmptyRegionError(f"box {b.as_list()} has no valid depth pixels")

    median, p90 = _median_p90(valid_values)
    # np.add.reduce is the kernel behind ndarray.mean/std; calling it
    # directly skips several dispatch layers while keeping the arithmetic
    # (pairwise summation in the array's dtype) bit-for-bit identical
    n_valid = valid_values.size
    mean_raw = np.add.reduce(valid_values) / n_valid
    centered = valid_values - mean_raw
    var = np.add.reduce(centered * centered) / n_valid
    mean = float(mean_raw)
    std = float(np.sqrt(var))
    dispersion = std / abs(mean) if mean != 0.0 else math.inf

    pool = region[finite]
    k = max(1, math.ceil(0.1 * pool.size))
    if d.valid_mask is None:
        # every finite pixel is trusted, so only the top-decile *values*
        # matter and any top-k selection yields the same count
        if k < pool.size:
            top = np.partition(pool.ravel(), pool.size - k)[pool.size - k:]
        else:
            top = pool.ravel()
        top_fraction = float((top <= outlier_mult * median).sum()) / k
    else:
        pool_valid = valid[finite]
        order = np.argsort(pool, kind="stable")[-k:]
        top_ok = pool_valid[order] & (pool[order] <= outlier_mult * median)
        top_fraction = float(top_ok.sum()) / k

    return DepthStats(
        median=float(median),
        p90=float(p90),
        valid_fraction=valid_values.size / n_pixels,
        dispersion=dispersion,
        top_decile_valid_fraction=top_fraction,
    )


def metric_reliability(
    s: DepthStats, cfg: ReliabilityThresholds = ReliabilityThresholds()
) -> tuple[bool, bool]:
    """(median reliable, p90 reliable)."""
    enough = s.valid_fraction >= cfg.min_valid_fraction
    med_ok = enough and s.dispersion <= cfg.max_dispersion
    p90_ok = enough and s.top_decile_valid_fraction >= cfg.min_valid_fraction
    return med_ok, p90_ok


def _metric_vote(
    value_a: float, value_b: float, eps: float
) -> DepthOrderValue | None:
    # margin is relative to the pair's mean for this metric
    scale = (abs(value_a) + abs(value_b)) / 2.0
    if abs(value_a - value_b) <= eps * scale:
        return None
    return DepthOrderValue.A_NEARER if value_a < value_b else DepthOrderValue.B_NEARER


def compare_depth(
    sa: DepthStats,
    sb: DepthStats,
    ra: tuple[bool, bool],
    rb: tuple[bool, bool],
    eps: float = 0.02,
) -> DepthOrder:
    """Order two objects by depth; smaller statistics mean nearer.

    A metric is usable for the pair when it is reliable on both objects and
    its difference clears the relative margin. Both usable and agreeing is
    Class A; only the median is B; only the p90 is C; disagreement or
    nothing usable is Class D, which callers must discard.
    """
    med_vote = None
    if ra[0] and rb[0]:
        med_vote = _metric_vote(sa.median, sb.median, eps)
    p90_vote = None
    if ra[1] and rb[1]:
        p90_vote = _metric_vote(sa.p90, sb.p90, eps)

    if med_vote is not None and p90_vote is not None:
        if med_vote is p90_vote:
            return DepthOrder(med_vote, QualityClass.A)
        return DepthOrder(DepthOrderValue.AMBIGUOUS, QualityClass.D)
    if med_vote is not None:
        return DepthOrder(med_vote, QualityClass.B)
    if p90_vote is not None:
        return DepthOrder(p90_vote, QualityClass.C)
    return DepthOrder(DepthOrderValue.AMBIGUOUS, QualityClass.D)


def left_right(a: BBox | NormalizedBBox, b: BBox | NormalizedBBox) -> LRValue:
    """Dual-anchor lateral order: centers AND disjoint extents must agree."""
    center_a = (a.x_min + a.x_max) / 2.0
    center_b = (b.x_min + b.x_max) / 2.0
    if center_a < center_b and a.x_max < b.x_min:
        return LRValue.LEFT
    if center_a > center_b and b.x_max < a.x_min:
        return LRValue.RIGHT
    return LRValue.AMBIGUOUS


def to_allocentric(r: LRValue, f: Facing) -> LRValue:
    """Camera-frame relation to the subject's own frame.

    A subject facing the camera has its left on the camera's right, so the
    relation flips; facing away it carries over unchanged.
    """
    if r is LRValue.AMBIGUOUS:
        raise GeometryError("ambiguous relation has no allocentric form")
    if f is Facing.AWAY:
        return r
    return LRValue.RIGHT if r is LRValue.LEFT else LRValue.LEFT


def map_facing(label: str) -> Facing | None:
    """Orientation label to the two canonical states; None excludes the
    object from perspective tasks."""
    mapping = {
        "front": Facing.TOWARD,
        "back": Facing.AWAY,
        "left": None,
        "right": None,
        "side": None,
        "three-quarter": None,
        "unknown": None,
    }
    if label not in mapping:
        raise GeometryError(f"unknown facing label {label!r}")
    return mapping[label]
