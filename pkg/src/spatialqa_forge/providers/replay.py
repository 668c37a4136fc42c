"""Record/replay fixture layer for deterministic runs without live models.

Fixture layout: {root}/{kind}/{key}.json where key is a hash of the
canonical request payload. Each file holds {"request": ..., "response": ...}
so fixtures stay auditable. Depth grids are stored in the same base64 wire
form the HTTP protocol uses.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from ..model import BBox, DepthMap, ImageRef
from .base import (
    MissingFixtureError,
    ProviderKind,
    decode_depth_map,
    encode_depth_map,
)


def _image_fields(image: ImageRef) -> dict:
    return {
        "source_dataset": image.source_dataset,
        "image_id": image.image_id,
        "width": image.width,
        "height": image.height,
    }


def request_payload(kind: ProviderKind, image: ImageRef, **fields) -> dict:
    payload = {"kind": kind.value, "image": _image_fields(image)}
    payload.update(fields)
    return payload


def request_key(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode(), digest_size=16).hexdigest()


def _box_fields(b: BBox) -> list[float]:
    return [round(c, 3) for c in b.as_list()]


class ReplayProvider:
    """Serves recorded fixtures; unknown requests fail loudly."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _load(self, kind: ProviderKind, payload: dict) -> dict:
        path = self.root / kind.value / f"{request_key(payload)}.json"
        if not path.exists():
            raise MissingFixtureError(
                f"no fixture for {kind.value} request "
                f"{json.dumps(payload, sort_keys=True)[:200]} at {path}"
            )
        return json.loads(path.read_text())["response"]

    def caption_text(self, image: ImageRef) -> str:
        return self._load(
            ProviderKind.CAPTIONER, request_payload(ProviderKind.CAPTIONER, image)
        )["text"]

    def region_caption_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        payload = request_payload(
            ProviderKind.CAPTIONER, image, bbox=_box_fields(b), hint=hint
        )
        return self._load(ProviderKind.CAPTIONER, payload)["text"]

    def orientation_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        payload = request_payload(
            ProviderKind.ORIENTATION, image, bbox=_box_fields(b), hint=hint
        )
        return self._load(ProviderKind.ORIENTATION, payload)["text"]

    def detect_boxes(self, image: ImageRef, query: str) -> list:
        payload = request_payload(ProviderKind.DETECTOR, image, query=query)
        body = self._load(ProviderKind.DETECTOR, payload)
        return [(entry["box"], entry["confidence"]) for entry in body["detections"]]

    def depth(self, image: ImageRef) -> DepthMap:
        payload = request_payload(ProviderKind.DEPTH, image)
        return decode_depth_map(self._load(ProviderKind.DEPTH, payload))

    def judge_text(self, image: ImageRef, question: str) -> str:
        payload = request_payload(ProviderKind.JUDGE, image, question=question)
        return self._load(ProviderKind.JUDGE, payload)["text"]

    def embed_image(self, image: ImageRef) -> list:
        payload = request_payload(ProviderKind.EMBEDDER, image)
        return self._load(ProviderKind.EMBEDDER, payload)["embedding"]


class RecordingProvider:
    """Wraps a live provider and writes every response as a fixture."""

    def __init__(self, inner, root: str | Path):
        self.inner = inner
        self.root = Path(root)

    def _store(self, kind: ProviderKind, payload: dict, response: dict):
        path = self.root / kind.value / f"{request_key(payload)}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"request": payload, "response": response}, sort_keys=True)
        )
        os.replace(tmp, path)

    def caption_text(self, image: ImageRef) -> str:
        text = self.inner.caption_text(image)
        self._store(
            ProviderKind.CAPTIONER,
            request_payload(ProviderKind.CAPTIONER, image),
            {"text": text},
        )
        return text

    def region_caption_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        text = self.inner.region_caption_text(image, b, hint)
        payload = request_payload(
            ProviderKind.CAPTIONER, image, bbox=_box_fields(b), hint=hint
        )
        self._store(ProviderKind.CAPTIONER, payload, {"text": text})
        return text

    def orientation_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        text = self.inner.orientation_text(image, b, hint)
        payload = request_payload(
            ProviderKind.ORIENTATION, image, bbox=_box_fields(b), hint=hint
        )
        self._store(ProviderKind.ORIENTATION, payload, {"text": text})
        return text

    def detect_boxes(self, image: ImageRef, query: str) -> list:
        raw = self.inner.detect_boxes(image, query)
        payload = request_payload(ProviderKind.DETECTOR, image, query=query)
        self._store(
            ProviderKind.DETECTOR,
            payload,
            {
                "detections": [
                    {"box": list(box), "confidence": conf} for box, conf in raw
                ]
            },
        )
        return raw

    def depth(self, image: ImageRef) -> DepthMap:
        depth = self.inner.depth(image)
        payload = request_payload(ProviderKind.DEPTH, image)
        self._store(ProviderKind.DEPTH, payload, encode_depth_map(depth))
        return depth

    def judge_text(self, image: ImageRef, question: str) -> str:
        text = self.inner.judge_text(image, question)
        payload = request_payload(ProviderKind.JUDGE, image, question=question)
        self._store(ProviderKind.JUDGE, payload, {"text": text})
        return text

    def embed_image(self, image: ImageRef) -> list:
        embedding = self.inner.embed_image(image)
        payload = request_payload(ProviderKind.EMBEDDER, image)
        self._store(ProviderKind.EMBEDDER, payload, {"embedding": list(embedding)})
        return embedding
