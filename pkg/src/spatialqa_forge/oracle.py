"""Synthetic 3D scenes with exact ground truth.

Axis-aligned boxes are placed in the camera frame (+x right, +y down,
+z forward), projected through a pinhole camera to 2D boxes, and ray-cast
into a dense depth map. Because every relation is known exactly in 3D,
these scenes serve as the independent oracle for the 2D geometric rules
and as fully deterministic end-to-end fixtures.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .geometry import DepthOrderValue, GeometryError, LRValue
from .model import (
    DepthConvention,
    DepthMap,
    BBox,
    ImageRef,
    Provenance,
    SceneObject,
    SceneRecord,
)

MIN_BOX_PX = 2.0


@dataclass(frozen=True, slots=True)
class SyntheticObject:
    object_id: int
    category: str
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    is_person: bool = False
    facing_yaw: float = 0.0  # 0 = toward camera, pi = away

    def __post_init__(self):
        if any(e <= 0 for e in self.half_extents):
            raise GeometryError("half extents must be positive")
        if self.center[2] - self.half_extents[2] <= 0:
            raise GeometryError("object must sit fully in front of the camera")

    @property
    def bearing(self) -> float:
        return self.center[0] / self.center[2]

    @property
    def z(self) -> float:
        return self.center[2]


@dataclass(frozen=True, slots=True)
class Camera:
    focal_px: float = 300.0
    width: int = 640
    height: int = 480


@dataclass(frozen=True, slots=True)
class SyntheticScene:
    objects: tuple[SyntheticObject, ...]
    camera: Camera
    seed: int


@dataclass(frozen=True, slots=True)
class LayoutConfig:
    """Placement ranges and the separation margins that keep relations clean.

    min_bearing_sep keeps projected extents laterally disjoint (each
    object's angular half-width stays under half the separation), and
    min_z_sep exceeds twice the largest depth half-extent so surface
    order always matches center order.
    """

    bearing_range: tuple[float, float] = (-0.55, 0.55)
    z_range: tuple[float, float] = (2.0, 9.0)
    y_range: tuple[float, float] = (-0.5, 0.5)
    min_bearing_sep: float = 0.16
    min_z_sep: float = 0.8
    hx_range: tuple[float, float] = (0.05, 0.5)
    hy_range: tuple[float, float] = (0.25, 0.6)
    hz_range: tuple[float, float] = (0.2, 0.35)
    person_fraction: float = 0.35
    background_z: float = 12.0
    max_attempts_per_object: int = 80
    # 0 disables; otherwise hx is drawn from the top of its per-object cap,
    # keeping projected widths near the separation-permitted maximum
    hx_cap_floor_fraction: float = 0.0
    # when set, hy = ratio * hx (clipped to hy_range), pinning the projected
    # aspect ratio instead of drawing hy independently
    hy_ratio_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.min_z_sep <= 2 * self.hz_range[1]:
            raise GeometryError("depth separation must exceed object depth span")
        if self.background_z <= self.z_range[1] + self.hz_range[1]:
            raise GeometryError("background must lie behind every object")
        if not 0.0 <= self.hx_cap_floor_fraction < 1.0:
            raise GeometryError("hx_cap_floor_fraction must be in [0, 1)")
        if self.hy_ratio_range is not None and (
            self.hy_ratio_range[0] <= 0
            or self.hy_ratio_range[0] > self.hy_ratio_range[1]
        ):
            raise GeometryError("hy_ratio_range must be positive and ordered")


_CATEGORIES = ("crate", "barrel", "cone", "sign", "plant", "bench")


def _scene_rng(seed: int) -> random.Random:
    digest = hashlib.blake2b(f"scene-oracle|{seed}".encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


def gen_scene(
    seed: int,
    n_objects: int,
    layout: LayoutConfig = LayoutConfig(),
    camera: Camera = Camera(),
) -> SyntheticScene:
    """Place objects with the configured separations; deterministic per seed."""
    if n_objects < 1:
        raise GeometryError("need at least one object")
    rng = _scene_rng(seed)
    objects: list[SyntheticObject] = []
    for object_id in range(n_objects):
        placed = None
        for _ in range(layout.max_attempts_per_object):
            z = rng.uniform(*layout.z_range)
            if any(abs(z - o.z) < layout.min_z_sep for o in objects):
                continue
            bearing = rng.uniform(*layout.bearing_range)
            if any(abs(bearing - o.bearing) < layout.min_bearing_sep for o in objects):
                continue
            hz = rng.uniform(*layout.hz_range)
            # angular half-width strictly inside half the bearing margin
            hx_cap = (layout.min_bearing_sep / 2.0 - 0.01) * (z - hz)
            hx_hi = min(layout.hx_range[1], hx_cap)
            hx_lo = max(layout.hx_range[0], layout.hx_cap_floor_fraction * hx_hi)
            hx = rng.uniform(hx_lo, hx_hi)
            if layout.hy_ratio_range is None:
                hy = rng.uniform(*layout.hy_range)
            else:
                ratio = rng.uniform(*layout.hy_ratio_range)
                hy = min(max(ratio * hx, layout.hy_range[0]), layout.hy_range[1])
            y = rng.uniform(*layout.y_range)
            is_person = rng.random() < layout.person_fraction
            candidate = SyntheticObject(
                object_id=object_id,
                category="person" if is_person else _CATEGORIES[object_id % len(_CATEGORIES)],
                center=(bearing * z, y, z),
                half_extents=(hx, hy, hz),
                is_person=is_person,
                facing_yaw=0.0 if rng.random() < 0.5 else math.pi,
            )
            if _projected_box(candidate, camera) is None:
                continue
            placed = candidate
            break
        if placed is None:
            raise GeometryError(
                f"could not place object {object_id} after "
                f"{layout.max_attempts_per_object} attempts"
            )
        objects.append(placed)
    return SyntheticScene(objects=tuple(objects), camera=camera, seed=seed)


def project_point(camera: Camera, x: float, y: float, z: float) -> tuple[float, float]:
    if z <= 0:
        raise GeometryError("point behind camera")
    return (
        camera.focal_px * x / z + camera.width / 2.0,
        camera.focal_px * y / z + camera.height / 2.0,
    )


def _projected_box(obj: SyntheticObject, camera: Camera) -> BBox | None:
    """Clipped bbox over the eight projected corners; None when too small."""
    (cx, cy, cz) = obj.center
    (hx, hy, hz) = obj.half_extents
    us, vs = [], []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                u, v = project_point(camera, cx + sx * hx, cy + sy * hy, cz + sz * hz)
                us.append(u)
                vs.append(v)
    x0 = max(0.0, min(us))
    y0 = max(0.0, min(vs))
    x1 = min(float(camera.width), max(us))
    y1 = min(float(camera.height), max(vs))
    if x1 - x0 < MIN_BOX_PX or y1 - y0 < MIN_BOX_PX:
        return None
    return BBox(x0, y0, x1, y1)


def _horizontal_word(bearing: float) -> str:
    if bearing < -0.08:
        return "left"
    if bearing > 0.08:
        return "right"
    return "central"


def _depth_word(z: float) -> str:
    if z < 4.5:
        return "foreground"
    if z < 6.5:
        return "middle distance"
    return "background"


def synth_caption(obj: SyntheticObject) -> str:
    return f"the {obj.category} in the {_horizontal_word(obj.bearing)} {_depth_word(obj.z)}"


def facing_label(obj: SyntheticObject) -> str | None:
    if not obj.is_person:
        return None
    if abs(obj.facing_yaw) < 1e-9:
        return "front"
    if abs(obj.facing_yaw - math.pi) < 1e-9:
        return "back"
    return "side"


@dataclass(frozen=True, slots=True)
class ProjectionResult:
    record: SceneRecord
    depth: DepthMap
    visible_ids: tuple[int, ...]
    occluded_ids: tuple[int, ...]


def _raster_depth(scene: SyntheticScene, background_z: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-surface z per pixel via ray/box intersection; painter by min."""
    cam = scene.camera
    depth = np.full((cam.height, cam.width), background_z, dtype=np.float32)
    owner = np.full((cam.height, cam.width), -1, dtype=np.int32)
    for idx, obj in enumerate(scene.objects):
        box = _projected_box(obj, cam)
        if box is None:
            continue
        x0 = int(math.floor(box.x_min))
        x1 = int(math.ceil(box.x_max))
        y0 = int(math.floor(box.y_min))
        y1 = int(math.ceil(box.y_max))
        xs = (np.arange(x0, x1, dtype=np.float64) + 0.5 - cam.width / 2.0) / cam.focal_px
        ys = (np.arange(y0, y1, dtype=np.float64) + 0.5 - cam.height / 2.0) / cam.focal_px
        dx, dy = np.meshgrid(xs, ys)
        dx = np.where(np.abs(dx) < 1e-12, 1e-12, dx)
        dy = np.where(np.abs(dy) < 1e-12, 1e-12, dy)
        (cx, cy, cz) = obj.center
        (hx, hy, hz) = obj.half_extents
        tx0 = (cx - hx) / dx
        tx1 = (cx + hx) / dx
        ty0 = (cy - hy) / dy
        ty1 = (cy + hy) / dy
        t_enter = np.maximum(
            np.minimum(tx0, tx1), np.maximum(np.minimum(ty0, ty1), cz - hz)
        )
        t_exit = np.minimum(
            np.maximum(tx0, tx1), np.minimum(np.maximum(ty0, ty1), cz + hz)
        )
        hit = (t_enter <= t_exit) & (t_exit > 0)
        region_depth = depth[y0:y1, x0:x1]
        region_owner = owner[y0:y1, x0:x1]
        wins = hit & (t_enter < region_depth)
        region_depth[wins] = t_enter[wins].astype(np.float32)
        region_owner[wins] = idx
    return depth, owner


def project(
    scene: SyntheticScene, background_z: float | None = None
) -> ProjectionResult:
    """Scene record plus dense depth; fully occluded objects are dropped
    from the record and reported."""
    cam = scene.camera
    background = background_z if background_z is not None else 12.0
    depth_values, owner = _raster_depth(scene, background)
    visible: list[int] = []
    occluded: list[int] = []
    objects: list[SceneObject] = []
    for idx, obj in enumerate(scene.objects):
        box = _projected_box(obj, cam)
        if box is None:
            raise GeometryError(f"object {obj.object_id} projects below {MIN_BOX_PX}px")
        if not bool((owner == idx).any()):
            occluded.append(obj.object_id)
            continue
        visible.append(obj.object_id)
        objects.append(
            SceneObject(
                object_id=obj.object_id,
                category=obj.category,
                bbox=box,
                region_caption=synth_caption(obj),
                is_person=obj.is_person,
                facing=facing_label(obj),
            )
        )
    image = ImageRef(
        source_dataset="oracle",
        image_id=f"synth-{scene.seed:05d}",
        uri=f"synthetic://{scene.seed}",
        width=cam.width,
        height=cam.height,
    )
    categories = ", ".join(sorted({o.category for o in objects})) or "nothing"
    record = SceneRecord(
        image=image,
        global_caption=f"a staged scene containing {categories}",
        objects=tuple(objects),
        provenance=Provenance(
            filtered=True, captioned=True, grounded=True, depth_attached=True
        ),
    )
    depth = DepthMap(
        width=cam.width,
        height=cam.height,
        values=depth_values,
        convention=DepthConvention.DISTANCE_INCREASING,
    )
    return ProjectionResult(
        record=record,
        depth=depth,
        visible_ids=tuple(visible),
        occluded_ids=tuple(occluded),
    )


@dataclass(frozen=True, slots=True)
class PairTruth:
    a_id: int
    b_id: int
    nearer: DepthOrderValue
    lateral: LRValue


@dataclass(frozen=True, slots=True)
class PersonView:
    person_id: int
    target_id: int
    relation: LRValue


@dataclass(frozen=True, slots=True)
class RelationTruth:
    pairs: tuple[PairTruth, ...]
    person_views: tuple[PersonView, ...]


def ground_truth_relations(scene: SyntheticScene) -> RelationTruth:
    """Exact relations from 3D state, independent of the 2D rule code.

    Near-far from center z; lateral order from bearing (x/z), matching
    what a projection preserves; a person's own left/right mirrors the
    camera order when they face the camera and keeps it when they face
    away.
    """
    pairs: list[PairTruth] = []
    objs = scene.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            a, b = objs[i], objs[j]
            if a.z < b.z:
                nearer = DepthOrderValue.A_NEARER
            elif b.z < a.z:
                nearer = DepthOrderValue.B_NEARER
            else:
                nearer = DepthOrderValue.AMBIGUOUS
            if a.bearing < b.bearing:
                lateral = LRValue.LEFT
            elif a.bearing > b.bearing:
                lateral = LRValue.RIGHT
            else:
                lateral = LRValue.AMBIGUOUS
            pairs.append(PairTruth(a.object_id, b.object_id, nearer, lateral))
    views: list[PersonView] = []
    for person in objs:
        label = facing_label(person)
        if label not in ("front", "back"):
            continue
        toward = label == "front"
        for target in objs:
            if target.object_id == person.object_id:
                continue
            if target.bearing == person.bearing:
                continue
            camera_side_left = target.bearing < person.bearing
            if toward:
                relation = LRValue.RIGHT if camera_side_left else LRValue.LEFT
            else:
                relation = LRValue.LEFT if camera_side_left else LRValue.RIGHT
            views.append(PersonView(person.object_id, target.object_id, relation))
    return RelationTruth(pairs=tuple(pairs), person_views=tuple(views))


def relations_to_dict(scene: SyntheticScene) -> dict:
    truth = ground_truth_relations(scene)
    return {
        "image_id": f"synth-{scene.seed:05d}",
        "pairs": [
            {
                "a": p.a_id,
                "b": p.b_id,
                "nearer": p.nearer.value,
                "lateral": p.lateral.value,
            }
            for p in truth.pairs
        ],
        "person_views": [
            {"person": v.person_id, "target": v.target_id, "relation": v.relation.value}
            for v in truth.person_views
        ],
    }


def render_preview(scene: SyntheticScene, background_z: float = 12.0) -> np.ndarray:
    """Grayscale raster shaded by inverse depth, for image-quality fixtures."""
    depth_values, _ = _raster_depth(scene, background_z)
    shade = 0.25 + 0.6 * (background_z - depth_values) / (background_z - 1.0)
    return np.clip(shade * 255.0, 0, 255).astype(np.uint8)


class OracleProvider:
    """Expert stand-in that answers from synthetic ground truth.

    Speaks the same wire formats the real providers do (caption/object
    markers, orientation JSON, box-confidence detections), so the whole
    extraction chain — prompts, parsers, gateway — is exercised against
    known-true answers. The judge is not served here: fixture pipelines
    judge in-process with full record access.
    """

    def __init__(self, corpus: dict[str, ProjectionResult]):
        self._corpus = dict(corpus)

    @classmethod
    def from_scenes(cls, scenes: list[SyntheticScene]) -> "OracleProvider":
        return cls({project(s).record.image.image_id: project(s) for s in scenes})

    def _projection(self, image: ImageRef) -> ProjectionResult:
        from .providers.base import ProviderError

        proj = self._corpus.get(image.image_id)
        if proj is None:
            raise ProviderError(f"unknown fixture image {image.image_id!r}")
        return proj

    def _match(self, image: ImageRef, b: BBox) -> SceneObject | None:
        from .geometry import bbox_iou

        record = self._projection(image).record
        best, best_iou = None, 0.0
        for obj in record.objects:
            iou = bbox_iou(obj.bbox, b)
            if iou > best_iou:
                best, best_iou = obj, iou
        return best if best_iou >= 0.5 else None

    def caption_text(self, image: ImageRef) -> str:
        import json

        record = self._projection(image).record
        names: list[str] = []
        for obj in record.objects:
            if obj.category not in names:
                names.append(obj.category)
        return f"Caption: {record.global_caption}\nObjects: {json.dumps(names)}"

    def region_caption_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        obj = self._match(image, b)
        return obj.region_caption if obj is not None else "unidentified area"

    def orientation_text(self, image: ImageRef, b: BBox, hint: str) -> str:
        import json

        obj = self._match(image, b)
        if obj is None:
            return json.dumps({"description": "unidentified area", "facing": "unknown"})
        return json.dumps(
            {
                "description": obj.region_caption,
                "facing": obj.facing if obj.facing is not None else "unknown",
            }
        )

    def detect_boxes(self, image: ImageRef, query: str) -> list:
        record = self._projection(image).record
        out = []
        for rank, obj in enumerate(o for o in record.objects if o.category == query):
            out.append(
                (
                    (obj.bbox.x_min, obj.bbox.y_min, obj.bbox.x_max, obj.bbox.y_max),
                    0.95 - 0.01 * rank,
                )
            )
        return out

    def depth(self, image: ImageRef) -> DepthMap:
        return self._projection(image).depth

    def judge_text(self, image: ImageRef, question: str) -> str:
        from .providers.base import ProviderError

        raise ProviderError("fixture pipelines judge in-process")

    def embed_image(self, image: ImageRef) -> list:
        digest = hashlib.blake2b(image.image_id.encode(), digest_size=8).digest()
        vec = [(b / 255.0) * 2.0 - 1.0 for b in digest]
        norm = math.sqrt(sum(v * v for v in vec)) or 1.0
        return [v / norm for v in vec]
