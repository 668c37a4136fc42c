"""Provider plumbing: endpoint config, error taxonomy, wire helpers.

A provider is any object exposing the raw-call surface below; the gateway
wraps it with retries, parsing, and normalization. Raw calls return provider
payloads (text, box lists, depth grids) without interpretation.

Raw provider surface:
    caption_text(image) -> str
    region_caption_text(image, bbox, hint) -> str
    orientation_text(image, bbox, hint) -> str
    detect_boxes(image, query) -> list[([x0, y0, x1, y1], confidence)]
    depth(image) -> DepthMap            (convention as produced)
    judge_text(image, question) -> str
    embed_image(image) -> list[float]
"""

from __future__ import annotations

import base64
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import BBox, DepthConvention, DepthMap, ImageRef


class ProviderKind(enum.Enum):
    CAPTIONER = "captioner"
    DETECTOR = "detector"
    DEPTH = "depth"
    ORIENTATION = "orientation"
    JUDGE = "judge"
    EMBEDDER = "embedder"


class ProviderError(Exception):
    pass


class TransportError(ProviderError):
    """Transient failure worth retrying (connection, timeout, 5xx, 429)."""


class ExhaustedRetriesError(ProviderError):
    pass


class ResponseFormatError(ProviderError):
    """Provider answered but the payload violates its format contract.

    Distinct from transport failures so callers can quarantine the record
    instead of retrying or dropping silently.
    """

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class DepthArtifactError(ProviderError):
    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class MissingFixtureError(ProviderError):
    pass


@dataclass(frozen=True, slots=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 8.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True, slots=True)
class ProviderEndpoint:
    kind: ProviderKind
    base_url: str = ""
    auth_env_var: str = ""
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass(frozen=True, slots=True)
class DetectionResult:
    """Detector output for one query; boxes sorted by descending score."""

    query: str
    boxes: tuple[tuple[BBox, float], ...]


def encode_depth_map(d: DepthMap) -> dict:
    """JSON-safe wire form of a depth grid (base64 of the raw buffer)."""
    values = np.ascontiguousarray(d.values, dtype=np.float32)
    payload = {
        "width": d.width,
        "height": d.height,
        "dtype": "float32",
        "values_b64": base64.b64encode(values.tobytes()).decode("ascii"),
        "convention": d.convention.value,
    }
    if d.valid_mask is not None:
        mask = np.ascontiguousarray(d.valid_mask, dtype=np.uint8)
        payload["valid_mask_b64"] = base64.b64encode(mask.tobytes()).decode("ascii")
    return payload


def decode_depth_map(payload: dict) -> DepthMap:
    try:
        width = int(payload["width"])
        height = int(payload["height"])
        raw = base64.b64decode(payload["values_b64"])
        convention = DepthConvention(payload["convention"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ResponseFormatError("bad_depth_payload", str(exc)) from exc
    values = np.frombuffer(raw, dtype=np.dtype(payload.get("dtype", "float32")))
    if values.size != width * height:
        raise ResponseFormatError(
            "bad_depth_payload",
            f"buffer holds {values.size} values for {width}x{height}",
        )
    mask = None
    if "valid_mask_b64" in payload:
        mask = np.frombuffer(
            base64.b64decode(payload["valid_mask_b64"]), dtype=np.uint8
        ).reshape(height, width).astype(bool)
    return DepthMap(
        width=width,
        height=height,
        values=values.reshape(height, width).copy(),
        convention=convention,
        valid_mask=mask,
    )


def _artifact_path(uri: str) -> Path:
    if uri.startswith("file://"):
        return Path(uri[len("file://"):])
    return Path(uri)


def load_depth_artifact(uri: str, image: ImageRef | None = None) -> DepthMap:
    """Load a single-channel .npy raster plus its sidecar header.

    The sidecar ({stem}.json next to the raster) must carry the depth
    convention tag; artifacts without one are refused rather than guessed.
    The returned map is canonicalized (larger = farther).
    """
    path = _artifact_path(uri)
    if not path.exists():
        raise DepthArtifactError("missing_artifact", str(path))
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise DepthArtifactError("missing_convention", f"no sidecar {sidecar}")
    header = json.loads(sidecar.read_text())
    try:
        convention = DepthConvention(header["convention"])
    except (KeyError, ValueError) as exc:
        raise DepthArtifactError("missing_convention", str(exc)) from exc
    values = np.load(path)
    if values.ndim != 2:
        raise DepthArtifactError("bad_artifact", f"expected 2D grid, got {values.shape}")
    height, width = values.shape
    if image is not None and (width != image.width or height != image.height):
        raise DepthArtifactError(
            "dim_mismatch",
            f"depth {width}x{height} vs image {image.width}x{image.height}",
        )
    mask = None
    mask_uri = header.get("valid_mask")
    if mask_uri:
        mask = np.load(_artifact_path(mask_uri)).astype(bool)
    return DepthMap(
        width=width,
        height=height,
        values=values.astype(np.float32),
        convention=convention,
        valid_mask=mask,
    ).canonicalized()


def save_depth_artifact(d: DepthMap, path: Path) -> None:
    """Write the .npy raster and its sidecar convention header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, d.values.astype(np.float32))
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"convention": d.convention.value}, sort_keys=True))
