"""Strict parsers for provider response formats.

These are total over arbitrary text: every input yields either a parsed
value or a ResponseFormatError with a stable code, never an unclassified
crash. Providers are never trusted to follow their instructions.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass

from ..model import FACING_LABELS
from .base import ResponseFormatError

# format markers the captioner is instructed to emit
_CAPTION_MARKER = "Caption:"
_OBJECTS_MARKER = "Objects:"

# terms about the picture itself, excluded from object lists defensively
META_TERMS = frozenset(
    {
        "image",
        "photo",
        "picture",
        "portrait",
        "photograph",
        "illustration",
        "painting",
        "drawing",
        "sketch",
        "artwork",
    }
)

_IRREGULAR_PLURALS = {
    "men": "man",
    "women": "woman",
    "children": "child",
    "people": "person",
    "feet": "foot",
    "teeth": "tooth",
    "geese": "goose",
    "mice": "mouse",
}

_NO_STRIP_ENDINGS = ("ss", "us", "is")


@dataclass(frozen=True, slots=True)
class CaptionResult:
    caption: str
    objects: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class OrientationResult:
    description: str
    facing: str


@dataclass(frozen=True, slots=True)
class RegionCaption:
    text: str
    truncated: bool = False
    hint_matched: bool = True


def singularize_word(word: str) -> str:
    """Small suffix-rule singularizer; heuristic, not linguistics."""
    if word in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[word]
    if len(word) > 3 and word.endswith("ies"):
        return word[:-3] + "y"
    for suffix in ("ches", "shes", "xes", "sses", "zes"):
        if len(word) > len(suffix) and word.endswith(suffix):
            return word[:-2]
    if len(word) > 2 and word.endswith("s") and not word.endswith(_NO_STRIP_ENDINGS):
        return word[:-1]
    return word


def normalize_object_name(name: str) -> str | None:
    """Lowercase, trim, singularize the head noun; None drops the entry."""
    cleaned = re.sub(r"\s+", " ", name.strip().lower())
    if not cleaned:
        return None
    words = cleaned.split(" ")
    words[-1] = singularize_word(words[-1])
    normalized = " ".join(words)
    if normalized in META_TERMS:
        return None
    return normalized


def _parse_object_list(text: str) -> list:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        # the prompt asks for a Python list, which may use single quotes
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ResponseFormatError("bad_object_list", str(exc)) from exc


def parse_caption_response(text: str) -> CaptionResult:
    """Split a captioner response into the caption and its object list."""
    caption_at = text.find(_CAPTION_MARKER)
    if caption_at < 0:
        raise ResponseFormatError("missing_caption", "no 'Caption:' marker")
    objects_at = text.find(_OBJECTS_MARKER, caption_at)
    if objects_at < 0:
        raise ResponseFormatError("missing_objects", "no 'Objects:' marker")
    caption = text[caption_at + len(_CAPTION_MARKER):objects_at].strip()
    if not caption:
        raise ResponseFormatError("missing_caption", "empty caption body")

    raw_list = _parse_object_list(text[objects_at + len(_OBJECTS_MARKER):])
    if not isinstance(raw_list, list) or any(
        not isinstance(item, str) for item in raw_list
    ):
        raise ResponseFormatError("bad_object_list", "expected a list of strings")

    objects: list[str] = []
    for item in raw_list:
        normalized = normalize_object_name(item)
        if normalized is not None and normalized not in objects:
            objects.append(normalized)
    return CaptionResult(caption=caption, objects=tuple(objects))


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def parse_orientation_response(text: str) -> OrientationResult:
    """Parse the orientation JSON; the facing label set is closed."""
    body = text.strip()
    fenced = _FENCE_RE.match(body)
    if fenced:
        body = fenced.group(1).strip()
    try:
        raw = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ResponseFormatError("invalid_json", exc.msg) from exc
    if not isinstance(raw, dict):
        raise ResponseFormatError("invalid_json", "expected a JSON object")
    for key in ("description", "facing"):
        if key not in raw:
            raise ResponseFormatError("missing_key", key)
    description = raw["description"]
    facing = raw["facing"]
    if not isinstance(description, str) or not isinstance(facing, str):
        raise ResponseFormatError("invalid_json", "keys must be strings")
    if facing not in FACING_LABELS:
        raise ResponseFormatError("unknown_label", facing)
    return OrientationResult(description=description.strip(), facing=facing)


def parse_region_caption(
    text: str, hint: str = "", word_limit: int | None = 20
) -> RegionCaption:
    """Clean a region caption; overlong ones are truncated and flagged."""
    cleaned = re.sub(r"\s+", " ", text.strip())
    cleaned = cleaned.strip('"')
    if not cleaned:
        raise ResponseFormatError("empty_caption")
    words = cleaned.split(" ")
    truncated = False
    if word_limit is not None and len(words) > word_limit:
        words = words[:word_limit]
        cleaned = " ".join(words).rstrip(",.;")
        truncated = True

    hint_matched = True
    if hint:
        head = " ".join(words[:6]).casefold()
        hint_matched = all(token in head for token in hint.casefold().split())
    return RegionCaption(text=cleaned, truncated=truncated, hint_matched=hint_matched)
