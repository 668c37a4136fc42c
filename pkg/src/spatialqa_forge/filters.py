"""Image- and annotation-level filtering plus category rebalancing.

Image quality uses cheap raster proxies: variance of a discrete Laplacian
over luminance for sharpness, mean luminance for exposure, and a minimum
side length for resolution. Semantic filtering compares a precomputed image
embedding against labeled anchor embeddings; no model runs here.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .model import BBox, ImageRef, SceneObject

DEFAULT_OVERREPRESENTED = ("sky", "tree", "window", "table", "floor")


@dataclass(frozen=True, slots=True)
class QualityThresholds:
    sharpness_min: float = 0.0005
    exposure_lo: float = 0.02
    exposure_hi: float = 0.98
    min_side: int = 64


@dataclass(frozen=True, slots=True)
class QualityReport:
    sharpness_score: float
    exposure_score: float
    resolution_ok: bool
    drop_reason: str | None  # None | "resolution" | "exposure" | "sharpness"

    @property
    def keep(self) -> bool:
        return self.drop_reason is None


@dataclass(frozen=True, slots=True)
class SemanticAnchorSet:
    positive: tuple[str, ...]
    negative: tuple[str, ...] = ()
    margin: float = 0.0

    def __post_init__(self):
        if not self.positive:
            raise ValueError("at least one positive anchor is required")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass
class CategoryHistogram:
    counts: Counter = field(default_factory=Counter)
    overrepresented: frozenset[str] = frozenset(DEFAULT_OVERREPRESENTED)

    def observe(self, category: str, n: int = 1):
        self.counts[category] += n

    def merge(self, other: "CategoryHistogram"):
        self.counts.update(other.counts)


def _luminance(pixels: np.ndarray) -> np.ndarray:
    """Normalized [0,1] luminance from a gray or RGB raster."""
    if not isinstance(pixels, np.ndarray) or pixels.size == 0:
        raise ValueError("undecodable raster: empty or not an array")
    if pixels.ndim == 3:
        if pixels.shape[2] < 3:
            pixels = pixels[:, :, 0]
        else:
            r, g, b = (pixels[:, :, i].astype(np.float64) for i in range(3))
            pixels = 0.299 * r + 0.587 * g + 0.114 * b
    elif pixels.ndim != 2:
        raise ValueError(f"undecodable raster: ndim={pixels.ndim}")
    lum = pixels.astype(np.float64)
    if lum.max() > 1.0:
        lum = lum / 255.0
    return np.clip(lum, 0.0, 1.0)


def sharpness_score(pixels: np.ndarray) -> float:
    """Variance of the 4-neighbor Laplacian; 0 for uniform, ~16 peak."""
    lum = _luminance(pixels)
    if lum.shape[0] < 3 or lum.shape[1] < 3:
        return 0.0
    lap = (
        lum[:-2, 1:-1]
        + lum[2:, 1:-1]
        + lum[1:-1, :-2]
        + lum[1:-1, 2:]
        - 4.0 * lum[1:-1, 1:-1]
    )
    return float(lap.var())


def exposure_score(pixels: np.ndarray) -> float:
    return float(_luminance(pixels).mean())


def assess_image_quality(
    pixels: np.ndarray, thresholds: QualityThresholds = QualityThresholds()
) -> QualityReport:
    """Keep iff resolution, exposure, and sharpness all clear their
    thresholds; the report carries one primary drop reason in that order."""
    lum = _luminance(pixels)
    height, width = lum.shape
    resolution_ok = min(width, height) >= thresholds.min_side
    exposure = exposure_score(lum)
    sharpness = sharpness_score(lum)

    reason = None
    if not resolution_ok:
        reason = "resolution"
    elif not thresholds.exposure_lo <= exposure <= thresholds.exposure_hi:
        reason = "exposure"
    elif sharpness < thresholds.sharpness_min:
        reason = "sharpness"
    return QualityReport(
        sharpness_score=sharpness,
        exposure_score=exposure,
        resolution_ok=resolution_ok,
        drop_reason=reason,
    )


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError(f"zero vector: {what}")
    return v / norm


def semantic_filter(
    image_embedding: np.ndarray,
    anchor_embeddings: Mapping[str, np.ndarray],
    anchors: SemanticAnchorSet,
) -> bool:
    """True (keep) iff the best positive-anchor cosine beats the best
    negative-anchor cosine by at least the margin."""
    image = _unit(image_embedding, "image_embedding")

    def best(labels: tuple[str, ...]) -> float:
        score = -1.0
        for label in labels:
            if label not in anchor_embeddings:
                raise ValueError(f"anchor {label!r} has no embedding")
            vec = _unit(anchor_embeddings[label], f"anchor {label!r}")
            if vec.shape != image.shape:
                raise ValueError(
                    f"dimension mismatch: anchor {label!r} {vec.shape} "
                    f"vs image {image.shape}"
                )
            score = max(score, float(image @ vec))
        return score

    best_positive = best(anchors.positive)
    best_negative = best(anchors.negative) if anchors.negative else -1.0
    return best_positive - best_negative >= anchors.margin


def filter_bbox(b: BBox, image: ImageRef | None = None) -> str | None:
    """Drop reason for a detection box, or None to keep.

    Aspect ratio (width over height) must lie inside [1/3, 3]; area must be
    at least 100^2 pixels (strictly smaller is dropped). Aspect is checked
    first so each drop carries one primary reason.
    """
    w = b.width
    h = b.height
    # cross-multiplied to avoid division: w/h <= 3 and w/h >= 1/3
    if w > 3.0 * h or h > 3.0 * w:
        return "aspect"
    if w * h < 10000.0:
        return "area"
    return None


def keep_decision(
    seed: int, source_dataset: str, image_id: str, object_id: int, keep_rate: float
) -> bool:
    """Deterministic per-object coin flip, independent of worker layout.

    The decision hashes (seed, source, image, object) only, so resharding
    or reordering the stream cannot change any object's fate.
    """
    key = f"{seed}|{source_dataset}|{image_id}|{object_id}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64 < keep_rate


def rebalance_categories(
    objects: Iterable[SceneObject],
    image: ImageRef,
    hist: CategoryHistogram,
    keep_rate: float = 0.10,
    seed: int = 0,
) -> list[SceneObject]:
    """Downsample objects of overrepresented categories to keep_rate."""
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError(f"keep_rate must be in (0, 1], got {keep_rate}")
    kept = []
    for obj in objects:
        if obj.category in hist.overrepresented and keep_rate < 1.0:
            if not keep_decision(
                seed, image.source_dataset, image.image_id, obj.object_id, keep_rate
            ):
                continue
        kept.append(obj)
    return kept
