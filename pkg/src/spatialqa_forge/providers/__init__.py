from .base import (
    DepthArtifactError,
    DetectionResult,
    ExhaustedRetriesError,
    MissingFixtureError,
    ProviderEndpoint,
    ProviderError,
    ProviderKind,
    ResponseFormatError,
    RetryPolicy,
    TransportError,
    load_depth_artifact,
    save_depth_artifact,
)
from .gateway import ExpertGateway
from .http import HttpProvider
from .mock import FlakyProvider, ScriptedProvider
from .parsing import (
    CaptionResult,
    OrientationResult,
    RegionCaption,
    normalize_object_name,
    parse_caption_response,
    parse_orientation_response,
    parse_region_caption,
)
from .replay import RecordingProvider, ReplayProvider

__all__ = [
    "CaptionResult",
    "DepthArtifactError",
    "DetectionResult",
    "ExhaustedRetriesError",
    "ExpertGateway",
    "FlakyProvider",
    "HttpProvider",
    "MissingFixtureError",
    "OrientationResult",
    "ProviderEndpoint",
    "ProviderError",
    "ProviderKind",
    "RecordingProvider",
    "RegionCaption",
    "ReplayProvider",
    "ResponseFormatError",
    "RetryPolicy",
    "ScriptedProvider",
    "TransportError",
    "load_depth_artifact",
    "normalize_object_name",
    "parse_caption_response",
    "parse_orientation_response",
    "parse_region_caption",
    "save_depth_artifact",
]
