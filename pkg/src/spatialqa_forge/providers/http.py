"""HTTP/JSON provider client.

Request/response schemas per kind are documented in docs/formats.md. Every
request POSTs JSON to {base_url}/v1/{kind} with a correlation id header;
auth tokens come from the environment variable named in the endpoint
config, never from config values themselves.
"""

from __future__ import annotations

import os
import uuid
from typing import Mapping

import httpx

from ..model import BBox, DepthConvention, DepthMap, ImageRef
from .base import (
    ProviderEndpoint,
    ProviderError,
    ProviderKind,
    ResponseFormatError,
    TransportError,
    decode_depth_map,
)
from .prompts import load_prompt, region_user_prompt

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpProvider:
    """Raw provider speaking the documented HTTP/JSON protocol."""

    def __init__(
        self,
        endpoints: Mapping[ProviderKind, ProviderEndpoint],
        depth_convention: DepthConvention | None = None,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.endpoints = dict(endpoints)
        if ProviderKind.DEPTH in self.endpoints and depth_convention is None:
            # refusing is deliberate: a silently guessed convention would
            # invert every near-far label downstream
            raise ProviderError(
                "depth endpoint configured without a declared depth_convention"
            )
        self.depth_convention = depth_convention
        self._client = client or httpx.Client(timeout=timeout)
        self._caption_prompt = load_prompt("global_caption")
        self._region_prompt = load_prompt("region_caption")
        self._orientation_prompt = load_prompt("orientation")

    def _post(self, kind: ProviderKind, payload: dict) -> dict:
        if kind not in self.endpoints:
            raise ProviderError(f"no endpoint configured for {kind.value}")
        endpoint = self.endpoints[kind]
        headers = {"X-Correlation-Id": uuid.uuid4().hex}
        if endpoint.auth_env_var:
            token = os.environ.get(endpoint.auth_env_var)
            if not token:
                raise ProviderError(
                    f"auth env var {endpoint.auth_env_var} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        url = endpoint.base_url.rstrip("/") + "/v1/" + kind.value
        try:
            response = self._client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"{kind.value}: {exc}") from exc
        if response.status_code in _RETRYABLE_STATUS:
            raise TransportError(f"{kind.value}: HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProviderError(
                f"{kind.value}: HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise ResponseFormatError("invalid_json", str(exc)) from exc

    @staticmethod
    def _text(body: dict) -> str:
        if "text" not in body or not isinstance(body["text"], str):
            raise ResponseFormatError("missing_text", "response lacks 'text'")
        return body["text"]

    # ------------------------------------------------------------------
    def caption_text(self, image: ImageRef) -> str:
        body = self._post(
            ProviderKind.CAPTIONER,
            {
                "image_uri": image.uri,
                "image_id": image.image_id,
                "system": self._caption_prompt.system,
                "prompt": self._caption_prompt.user.format(question=""),
            },
        )
        return self._text(body)

    def region_caption_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        user = region_user_prompt(
            self._region_prompt,
            hint=hint,
            xmin=b.x_min, ymin=b.y_min, xmax=b.x_max, ymax=b.y_max,
            width=image.width, height=image.height,
        )
        body = self._post(
            ProviderKind.CAPTIONER,
            {
                "image_uri": image.uri,
                "image_id": image.image_id,
                # the crop is sent so the provider can honor "only judge
                # inside the box" without re-reading the full image
                "crop_bbox": b.as_list(),
                "system": self._region_prompt.system,
                "prompt": user,
                "hint": hint,
            },
        )
        return self._text(body)

    def orientation_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        user = self._orientation_prompt.user.format(
            xmin=round(b.x_min), ymin=round(b.y_min),
            xmax=round(b.x_max), ymax=round(b.y_max),
            W=image.width, H=image.height,
        )
        body = self._post(
            ProviderKind.ORIENTATION,
            {
                "image_uri": image.uri,
                "image_id": image.image_id,
                "crop_bbox": b.as_list(),
                "system": self._orientation_prompt.system,
                "prompt": user,
                "hint": hint,
            },
        )
        return self._text(body)

    def detect_boxes(self, image: ImageRef, query: str) -> list:
        body = self._post(
            ProviderKind.DETECTOR,
            {"image_uri": image.uri, "image_id": image.image_id, "query": query},
        )
        detections = body.get("detections")
        if not isinstance(detections, list):
            raise ResponseFormatError("missing_detections")
        out = []
        for entry in detections:
            try:
                out.append((list(entry["box"]), float(entry["confidence"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ResponseFormatError("bad_detection", str(exc)) from exc
        return out

    def depth(self, image: ImageRef) -> DepthMap:
        body = self._post(
            ProviderKind.DEPTH,
            {"image_uri": image.uri, "image_id": image.image_id},
        )
        if "convention" not in body:
            body = dict(body, convention=self.depth_convention.value)
        depth = decode_depth_map(body)
        if depth.convention is not self.depth_convention:
            raise ResponseFormatError(
                "convention_mismatch",
                f"response says {depth.convention.value}, config says "
                f"{self.depth_convention.value}",
            )
        return depth

    def judge_text(self, image: ImageRef, question: str) -> str:
        # deliberately no answer and no context: the judge must answer
        # independently from the image and question alone
        body = self._post(
            ProviderKind.JUDGE,
            {"image_uri": image.uri, "image_id": image.image_id, "question": question},
        )
        return self._text(body)

    def embed_image(self, image: ImageRef) -> list:
        body = self._post(
            ProviderKind.EMBEDDER,
            {"image_uri": image.uri, "image_id": image.image_id},
        )
        embedding = body.get("embedding")
        if not isinstance(embedding, list) or not embedding:
            raise ResponseFormatError("missing_embedding")
        return embedding
