"""Retry, concurrency-bound, and parse layer over raw providers."""

from __future__ import annotations

import logging
import random
import threading
import time
import uuid
from typing import Callable, Mapping, TypeVar

import numpy as np

from ..model import BBox, DepthMap, ImageRef
from .base import (
    DepthArtifactError,
    DetectionResult,
    ExhaustedRetriesError,
    ProviderEndpoint,
    ProviderKind,
    TransportError,
    load_depth_artifact,
)
from .parsing import (
    CaptionResult,
    OrientationResult,
    RegionCaption,
    ResponseFormatError,
    parse_caption_response,
    parse_orientation_response,
    parse_region_caption,
)

log = logging.getLogger(__name__)

T = TypeVar("T")


class ExpertGateway:
    """Typed access to expert models with retries and in-flight bounds.

    The gateway owns no synthesis decisions: every output is parsed provider
    content plus normalization. Each endpoint's max_in_flight bound is a
    process-global semaphore, so worker threads share one budget. Transient
    failures retry with jittered exponential backoff; sleep and jitter are
    injectable for deterministic tests.
    """

    def __init__(
        self,
        provider,
        endpoints: Mapping[ProviderKind, ProviderEndpoint] | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter: random.Random | None = None,
        region_word_limit: int | None = 20,
    ):
        self.provider = provider
        self.endpoints = dict(endpoints or {})
        for kind in ProviderKind:
            self.endpoints.setdefault(kind, ProviderEndpoint(kind=kind))
        self._sleep = sleep
        self._jitter = jitter or random.Random()
        self._semaphores = {
            kind: threading.BoundedSemaphore(ep.max_in_flight)
            for kind, ep in self.endpoints.items()
        }
        self.region_word_limit = region_word_limit

    def _call(self, kind: ProviderKind, fn: Callable[[], T]) -> T:
        endpoint = self.endpoints[kind]
        policy = endpoint.retry
        correlation_id = uuid.uuid4().hex
        last: TransportError | None = None
        with self._semaphores[kind]:
            for attempt in range(1, policy.max_attempts + 1):
                try:
                    return fn()
                except TransportError as exc:
                    last = exc
                    if attempt == policy.max_attempts:
                        break
                    delay = min(
                        policy.backoff_cap, policy.backoff_base * 2 ** (attempt - 1)
                    )
                    delay *= 0.5 + 0.5 * self._jitter.random()
                    log.warning(
                        "%s attempt %d/%d failed (%s), retrying in %.2fs [%s]",
                        kind.value, attempt, policy.max_attempts, exc, delay,
                        correlation_id,
                    )
                    self._sleep(delay)
        raise ExhaustedRetriesError(
            f"{kind.value} failed after {policy.max_attempts} attempts "
            f"[{correlation_id}]: {last}"
        ) from last

    # ------------------------------------------------------------------
    def request_global_caption(self, image: ImageRef) -> CaptionResult:
        raw = self._call(
            ProviderKind.CAPTIONER, lambda: self.provider.caption_text(image)
        )
        return parse_caption_response(raw)

    def request_region_caption(
        self, image: ImageRef, b: BBox, hint: str
    ) -> RegionCaption:
        _check_box(image, b)
        raw = self._call(
            ProviderKind.CAPTIONER,
            lambda: self.provider.region_caption_text(image, b, hint),
        )
        return parse_region_caption(raw, hint=hint, word_limit=self.region_word_limit)

    def request_orientation(
        self, image: ImageRef, b: BBox, hint: str
    ) -> OrientationResult:
        _check_box(image, b)
        raw = self._call(
            ProviderKind.ORIENTATION,
            lambda: self.provider.orientation_text(image, b, hint),
        )
        return parse_orientation_response(raw)

    def detect_objects(
        self, image: ImageRef, queries: list[str]
    ) -> list[DetectionResult]:
        """One result per query, in query order; duplicates stay duplicated."""
        if not queries:
            raise ValueError("queries must be non-empty")
        results = []
        for query in queries:
            raw = self._call(
                ProviderKind.DETECTOR,
                lambda q=query: self.provider.detect_boxes(image, q),
            )
            boxes = []
            for entry in raw:
                coords, confidence = entry
                clipped = _clip_box(coords, image)
                if clipped is not None:
                    boxes.append((clipped, float(confidence)))
            boxes.sort(key=lambda pair: -pair[1])
            results.append(DetectionResult(query=query, boxes=tuple(boxes)))
        return results

    def fetch_depth_map(self, image: ImageRef) -> DepthMap:
        """Depth for the image, canonicalized so larger means farther.

        A depth_uri artifact takes precedence; otherwise the configured
        depth provider is asked. Grid dimensions must match the image.
        """
        if image.depth_uri:
            return load_depth_artifact(image.depth_uri, image)
        depth = self._call(ProviderKind.DEPTH, lambda: self.provider.depth(image))
        if depth is None:
            raise DepthArtifactError(
                "missing_artifact", f"no depth source for {image.image_id}"
            )
        if depth.width != image.width or depth.height != image.height:
            raise DepthArtifactError(
                "dim_mismatch",
                f"depth {depth.width}x{depth.height} vs image "
                f"{image.width}x{image.height}",
            )
        return depth.canonicalized()

    def judge_answer(self, image: ImageRef, question: str) -> str:
        return self._call(
            ProviderKind.JUDGE, lambda: self.provider.judge_text(image, question)
        )

    def embed_image(self, image: ImageRef) -> np.ndarray:
        raw = self._call(
            ProviderKind.EMBEDDER, lambda: self.provider.embed_image(image)
        )
        return np.asarray(raw, dtype=np.float64)


def _check_box(image: ImageRef, b: BBox) -> None:
    if not (0 <= b.x_min < b.x_max <= image.width) or not (
        0 <= b.y_min < b.y_max <= image.height
    ):
        raise ValueError(
            f"box {b.as_list()} invalid for image {image.width}x{image.height}"
        )


def _clip_box(coords, image: ImageRef) -> BBox | None:
    x0, y0, x1, y1 = (float(c) for c in coords)
    x0 = max(0.0, min(x0, image.width))
    x1 = max(0.0, min(x1, image.width))
    y0 = max(0.0, min(y0, image.height))
    y1 = max(0.0, min(y1, image.height))
    if x0 >= x1 or y0 >= y1:
        return None
    return BBox(x0, y0, x1, y1)
