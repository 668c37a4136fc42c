"""Core record types and their JSONL wire format.

Scene records and QA records are stored one JSON object per line with keys
in alphabetical order, so serialize(parse(line)) == line for canonical
input. See docs/formats.md for the full field tables.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

FACING_LABELS = ("front", "back", "left", "right", "side", "three-quarter", "unknown")


class RecordError(ValueError):
    """Raised when a record line violates the wire format.

    `field` names the offending field, e.g. "objects[2].bbox".
    """

    def __init__(self, message: str, field: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class TaskKind(enum.Enum):
    """The six task families. Closed set: adding one is a schema change."""

    GROUNDING = "grounding"
    REFERRING = "referring"
    COUNTING = "counting"
    NEAR_FAR = "near_far"
    LEFT_RIGHT = "left_right"
    PERSPECTIVE = "perspective"

    # members are singletons, so identity hashing is sound and avoids
    # re-hashing the member name on every keyed lookup
    __hash__ = object.__hash__


_TASK_BY_VALUE = {t.value: t for t in TaskKind}


class DepthConvention(enum.Enum):
    # canonical: larger value = farther from camera
    DISTANCE_INCREASING = "distance_increasing"
    # disparity-like: larger value = nearer
    DISTANCE_DECREASING = "distance_decreasing"


@dataclass(frozen=True, slots=True)
class ImageRef:
    source_dataset: str
    image_id: str
    uri: str
    width: int
    height: int
    depth_uri: str | None = None

    def to_dict(self) -> dict:
        return {
            "source_dataset": self.source_dataset,
            "image_id": self.image_id,
            "uri": self.uri,
            "width": self.width,
            "height": self.height,
            "depth_uri": self.depth_uri,
        }


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in pixel coordinates, x right, y down."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True, slots=True)
class NormalizedBBox:
    """Box on the 0..1000 integer grid used in question/answer text."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True, slots=True)
class SceneObject:
    object_id: int
    category: str
    bbox: BBox
    region_caption: str = ""
    is_person: bool = False
    facing: str | None = None

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "category": self.category,
            "bbox": self.bbox.as_list(),
            "region_caption": self.region_caption,
            "is_person": self.is_person,
            "facing": self.facing,
        }


@dataclass(frozen=True, slots=True)
class Provenance:
    """Which pipeline stages have touched this scene."""

    filtered: bool = False
    captioned: bool = False
    grounded: bool = False
    depth_attached: bool = False

    def to_dict(self) -> dict:
        return {
            "filtered": self.filtered,
            "captioned": self.captioned,
            "grounded": self.grounded,
            "depth_attached": self.depth_attached,
        }


@dataclass(frozen=True, slots=True)
class SceneRecord:
    image: ImageRef
    global_caption: str
    objects: tuple[SceneObject, ...]
    provenance: Provenance = field(default_factory=Provenance)

    def object_by_id(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)

    def to_dict(self) -> dict:
        return {
            "image": self.image.to_dict(),
            "global_caption": self.global_caption,
            "objects": [o.to_dict() for o in self.objects],
            "provenance": self.provenance.to_dict(),
        }


@dataclass(frozen=True, slots=True)
class QARecord:
    qa_id: str
    image: ImageRef
    task: TaskKind
    question: str
    answer: str
    object_ids: tuple[int, ...]
    template_id: str
    answer_boxes: tuple[NormalizedBBox, ...] | None = None
    verified: bool = False
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "image": self.image.to_dict(),
            "task": self.task.value,
            "question": self.question,
            "answer": self.answer,
            "object_ids": list(self.object_ids),
            "template_id": self.template_id,
            "answer_boxes": (
                None
                if self.answer_boxes is None
                else [b.as_list() for b in self.answer_boxes]
            ),
            "verified": self.verified,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth aligned to the image raster.

    `values` has shape (height, width). `valid_mask`, when present, marks
    pixels whose value is trustworthy; non-finite values are always invalid.
    """

    width: int
    height: int
    values: np.ndarray
    convention: DepthConvention = DepthConvention.DISTANCE_INCREASING
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"(height={self.height}, width={self.width})"
            )
        if self.valid_mask is not None and self.valid_mask.shape != self.values.shape:
            raise ValueError("valid_mask shape does not match values")

    def validity(self) -> np.ndarray:
        valid = np.isfinite(self.values)
        if self.valid_mask is not None:
            valid &= self.valid_mask.astype(bool)
        return valid

    def canonicalized(self) -> "DepthMap":
        """Flip disparity-like maps so larger always means farther.

        Only the ordering of values is meaningful afterwards, not the scale.
        """
        if self.convention is DepthConvention.DISTANCE_INCREASING:
            return self
        valid = self.validity()
        values = self.values.astype(np.float32, copy=True)
        if valid.any():
            values[valid] = values[valid].max() - values[valid]
        return DepthMap(
            width=self.width,
            height=self.height,
            values=values,
            convention=DepthConvention.DISTANCE_INCREASING,
            valid_mask=None if self.valid_mask is None else self.valid_mask.copy(),
        )


# ---------------------------------------------------------------------------
# parsing helpers

_MISSING = object()


def _require(obj: dict, key: str, kind, path: str):
    value = obj.get(key, _MISSING)
    if value is _MISSING:
        raise RecordError("missing field", f"{path}{key}")
    if type(value) is kind:  # exact match; bool is not int here by identity
        return float(value) if kind is float else value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise RecordError("expected a number", f"{path}{key}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise RecordError("expected an integer", f"{path}{key}")
        return value
    if not isinstance(value, kind):
        raise RecordError(f"expected {kind.__name__}", f"{path}{key}")
    return value


# records from one image repeat the same image payload; remember refs that
# already passed validation. Keys carry each value's type so an invalid
# variant (e.g. a bool where an int belongs) can never alias a valid entry.
_IMAGE_INTERN: dict[tuple, ImageRef] = {}
_IMAGE_INTERN_LIMIT = 4096
_IMAGE_FIELDS = ("source_dataset", "image_id", "uri", "width", "height", "depth_uri")


def _parse_image(obj, path: str) -> ImageRef:
    if not isinstance(obj, dict):
        raise RecordError("expected an object", path)
    try:
        key = tuple((type(v), v) for v in map(obj.get, _IMAGE_FIELDS))
        hit = _IMAGE_INTERN.get(key)
    except TypeError:  # unhashable value; full validation will reject it
        key = None
        hit = None
    if hit is not None:
        return hit
    width = _require(obj, "width", int, path)
    height = _require(obj, "height", int, path)
    if width <= 0 or height <= 0:
        raise RecordError("image dimensions must be positive", f"{path}width")
    depth_uri = obj.get("depth_uri")
    if depth_uri is not None and not isinstance(depth_uri, str):
        raise RecordError("expected string or null", f"{path}depth_uri")
    ref = ImageRef(
        source_dataset=_require(obj, "source_dataset", str, path),
        image_id=_require(obj, "image_id", str, path),
        uri=_require(obj, "uri", str, path),
        width=width,
        height=height,
        depth_uri=depth_uri,
    )
    if key is not None:
        if len(_IMAGE_INTERN) >= _IMAGE_INTERN_LIMIT:
            _IMAGE_INTERN.clear()
        _IMAGE_INTERN[key] = ref
    return ref


def _parse_bbox_list(raw, path: str) -> tuple[float, float, float, float]:
    if not isinstance(raw, list) or len(raw) != 4:
        raise RecordError("expected [x_min, y_min, x_max, y_max]", path)
    coords = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise RecordError("expected a number", f"{path}[{i}]")
        if not math.isfinite(v):
            raise RecordError("coordinate is not finite", f"{path}[{i}]")
        coords.append(float(v))
    return coords[0], coords[1], coords[2], coords[3]


def parse_scene_record(line: str) -> SceneRecord:
    """Parse one scene JSONL line, validating geometry against image size."""
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"malformed JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise RecordError("expected a JSON object")

    image = _parse_image(raw.get("image"), "image.")
    global_caption = _require(raw, "global_caption", str, "")
    objects_raw = _require(raw, "objects", list, "")

    objects = []
    seen_ids: set[int] = set()
    for i, entry in enumerate(objects_raw):
        path = f"objects[{i}]."
        if not isinstance(entry, dict):
            raise RecordError("expected an object", f"objects[{i}]")
        object_id = _require(entry, "object_id", int, path)
        if object_id in seen_ids:
            raise RecordError(f"duplicate object_id {object_id}", f"{path}object_id")
        seen_ids.add(object_id)
        x_min, y_min, x_max, y_max = _parse_bbox_list(entry.get("bbox"), f"{path}bbox")
        if not (x_min < x_max and y_min < y_max):
            raise RecordError("degenerate box", f"{path}bbox")
        if x_min < 0 or y_min < 0 or x_max > image.width or y_max > image.height:
            raise RecordError(
                f"box outside image bounds {image.width}x{image.height}",
                f"{path}bbox",
            )
        facing = entry.get("facing")
        if facing is not None:
            if not isinstance(facing, str) or facing not in FACING_LABELS:
                raise RecordError(
                    f"facing must be one of {FACING_LABELS} or null", f"{path}facing"
                )
        is_person = entry.get("is_person", False)
        if not isinstance(is_person, bool):
            raise RecordError("expected a boolean", f"{path}is_person")
        objects.append(
            SceneObject(
                object_id=object_id,
                category=_require(entry, "category", str, path),
                bbox=BBox(x_min, y_min, x_max, y_max),
                region_caption=_require(entry, "region_caption", str, path),
                is_person=is_person,
                facing=facing,
            )
        )

    prov_raw = raw.get("provenance", {})
    if not isinstance(prov_raw, dict):
        raise RecordError("expected an object", "provenance")
    for key, value in prov_raw.items():
        if not isinstance(value, bool):
            raise RecordError("expected a boolean", f"provenance.{key}")
    provenance = Provenance(
        filtered=prov_raw.get("filtered", False),
        captioned=prov_raw.get("captioned", False),
        grounded=prov_raw.get("grounded", False),
        depth_attached=prov_raw.get("depth_attached", False),
    )
    return SceneRecord(
        image=image,
        global_caption=global_caption,
        objects=tuple(objects),
        provenance=provenance,
    )


def serialize_scene_record(record: SceneRecord) -> str:
    """One JSON line, keys alphabetical, no trailing newline."""
    return json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False)


def parse_qa_record(line: str) -> QARecord:
    """Parse one QA JSONL line."""
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"malformed JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise RecordError("expected a JSON object")

    image = _parse_image(raw.get("image"), "image.")
    task_raw = _require(raw, "task", str, "")
    task = _TASK_BY_VALUE.get(task_raw)
    if task is None:
        raise RecordError(f"unknown task {task_raw!r}", "task")

    boxes_raw = raw.get("answer_boxes")
    answer_boxes = None
    if boxes_raw is not None:
        if not isinstance(boxes_raw, list):
            raise RecordError("expected a list or null", "answer_boxes")
        parsed = []
        for i, entry in enumerate(boxes_raw):
            path = f"answer_boxes[{i}]"
            if (
                type(entry) is list
                and len(entry) == 4
                and type(entry[0]) is int
                and type(entry[1]) is int
                and type(entry[2]) is int
                and type(entry[3]) is int
            ):
                ints = entry
                for j, v in enumerate(entry):
                    if not 0 <= v <= 1000:
                        raise RecordError(
                            "coordinate outside 0..1000", f"{path}[{j}]"
                        )
            else:
                coords = _parse_bbox_list(entry, path)
                ints = []
                for j, v in enumerate(coords):
                    if v != int(v):
                        raise RecordError("expected an integer", f"{path}[{j}]")
                    if not 0 <= v <= 1000:
                        raise RecordError(
                            "coordinate outside 0..1000", f"{path}[{j}]"
                        )
                    ints.append(int(v))
            if not (ints[0] < ints[2] and ints[1] < ints[3]):
                raise RecordError("degenerate box", path)
            parsed.append(NormalizedBBox(*ints))
        answer_boxes = tuple(parsed)

    object_ids_raw = _require(raw, "object_ids", list, "")
    object_ids = []
    for i, v in enumerate(object_ids_raw):
        if isinstance(v, bool) or not isinstance(v, int):
            raise RecordError("expected an integer", f"object_ids[{i}]")
        object_ids.append(v)

    flags_raw = raw.get("flags", [])
    if not isinstance(flags_raw, list) or any(
        not isinstance(f, str) for f in flags_raw
    ):
        raise RecordError("expected a list of strings", "flags")

    verified = _require(raw, "verified", bool, "")

    return QARecord(
        qa_id=_require(raw, "qa_id", str, ""),
        image=image,
        task=task,
        question=_require(raw, "question", str, ""),
        answer=_require(raw, "answer", str, ""),
        object_ids=tuple(object_ids),
        template_id=_require(raw, "template_id", str, ""),
        answer_boxes=answer_boxes,
        verified=verified,
        flags=tuple(flags_raw),
    )


def serialize_qa_record(record: QARecord, strict: bool = True) -> str:
    """One JSON line. With strict=True, refuses unverified records: only
    verified records may reach final output shards."""
    if strict and not record.verified:
        raise ValueError(f"unverified record {record.qa_id} in strict serialization")
    return json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False)
