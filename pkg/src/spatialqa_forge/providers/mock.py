"""Scripted providers for tests: fixed payloads and fault injection."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import BBox, DepthMap, ImageRef
from .base import ProviderKind, TransportError


def box_key(b: BBox) -> tuple[int, int, int, int]:
    return (round(b.x_min), round(b.y_min), round(b.x_max), round(b.y_max))


@dataclass
class ScriptedProvider:
    """Raw provider whose every answer comes from lookup tables."""

    captions: dict[str, str] = field(default_factory=dict)
    regions: dict[tuple, str] = field(default_factory=dict)
    orientations: dict[tuple, str] = field(default_factory=dict)
    detections: dict[tuple, list] = field(default_factory=dict)
    depths: dict[str, DepthMap] = field(default_factory=dict)
    judge_answers: dict[tuple, str] = field(default_factory=dict)
    embeddings: dict[str, list] = field(default_factory=dict)
    default_embedding: list = field(default_factory=lambda: [1.0, 0.0])

    def caption_text(self, image: ImageRef) -> str:
        return self.captions[image.image_id]

    def region_caption_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        return self.regions[(image.image_id, box_key(b))]

    def orientation_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        return self.orientations[(image.image_id, box_key(b))]

    def detect_boxes(self, image: ImageRef, query: str) -> list:
        return self.detections.get((image.image_id, query), [])

    def depth(self, image: ImageRef) -> DepthMap:
        return self.depths[image.image_id]

    def judge_text(self, image: ImageRef, question: str) -> str:
        return self.judge_answers[(image.image_id, question)]

    def embed_image(self, image: ImageRef) -> list:
        return self.embeddings.get(image.image_id, self.default_embedding)


class FlakyProvider:
    """Raises TransportError for the first N calls per kind, then delegates."""

    def __init__(self, inner, failures: dict[ProviderKind, int]):
        self.inner = inner
        self._remaining = dict(failures)
        self.calls: dict[ProviderKind, int] = {}

    def _maybe_fail(self, kind: ProviderKind):
        self.calls[kind] = self.calls.get(kind, 0) + 1
        left = self._remaining.get(kind, 0)
        if left > 0:
            self._remaining[kind] = left - 1
            raise TransportError(f"scripted failure for {kind.value}")

    def caption_text(self, image):
        self._maybe_fail(ProviderKind.CAPTIONER)
        return self.inner.caption_text(image)

    def region_caption_text(self, image, b, hint):
        self._maybe_fail(ProviderKind.CAPTIONER)
        return self.inner.region_caption_text(image, b, hint)

    def orientation_text(self, image, b, hint):
        self._maybe_fail(ProviderKind.ORIENTATION)
        return self.inner.orientation_text(image, b, hint)

    def detect_boxes(self, image, query):
        self._maybe_fail(ProviderKind.DETECTOR)
        return self.inner.detect_boxes(image, query)

    def depth(self, image):
        self._maybe_fail(ProviderKind.DEPTH)
        return self.inner.depth(image)

    def judge_text(self, image, question):
        self._maybe_fail(ProviderKind.JUDGE)
        return self.inner.judge_text(image, question)

    def embed_image(self, image):
        self._maybe_fail(ProviderKind.EMBEDDER)
        return self.inner.embed_image(image)
