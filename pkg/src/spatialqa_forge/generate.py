"""Seeded QA generation over enriched scene records.

Everything here is a pure function of (scene record, sampling policy,
template registry, seed) — plus the depth map the scene's image points at
for distance-order tasks. Randomness comes only from per-(seed, image,
task) derived streams, so scenes can be processed in any order, on any
number of workers, with identical output.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TypeVar

from .geometry import (
    DepthOrder,
    DepthOrderValue,
    DepthStats,
    EmptyRegionError,
    LRValue,
    QualityClass,
    ReliabilityThresholds,
    compare_depth,
    depth_stats,
    left_right,
    map_facing,
    metric_reliability,
    normalize_bbox,
    to_allocentric,
)
from .model import (
    DepthConvention,
    DepthMap,
    ImageRef,
    NormalizedBBox,
    QARecord,
    SceneObject,
    SceneRecord,
    TaskKind,
)
from .templates import (
    QATemplate,
    TemplateRegistry,
    default_registry,
    format_box,
    instantiate_template,
    is_box_placeholder,
    placeholders,
)

_T = TypeVar("_T")

DEFAULT_TASK_CAPS: Mapping[TaskKind, int] = {
    TaskKind.GROUNDING: 4,
    TaskKind.REFERRING: 4,
    TaskKind.COUNTING: 2,
    TaskKind.NEAR_FAR: 4,
    TaskKind.LEFT_RIGHT: 2,
    TaskKind.PERSPECTIVE: 1,
}

NON_UNIQUE_REFERENCE = "non_unique_reference"

# RNG stream label for pair/object sampling, kept distinct from any task.
_PAIR_STREAM = "pair-sampling"


@dataclass(frozen=True)
class SamplingPolicy:
    """How many records each image may yield, and what depth quality counts."""

    max_pairs_per_image_per_task: int | Mapping[TaskKind, int] = field(
        default_factory=lambda: dict(DEFAULT_TASK_CAPS)
    )
    seed: int = 0
    min_depth_quality: frozenset[QualityClass] = frozenset(
        {QualityClass.A, QualityClass.B, QualityClass.C}
    )

    def __post_init__(self):
        caps = self.max_pairs_per_image_per_task
        values = [caps] if isinstance(caps, int) else list(caps.values())
        if any(not isinstance(v, int) or v < 0 for v in values):
            raise ValueError("per-task caps must be non-negative integers")
        if QualityClass.D in self.min_depth_quality:
            raise ValueError("ClassD depth pairs are never eligible")
        if not self.min_depth_quality:
            raise ValueError("min_depth_quality must allow at least one class")

    def cap(self, task: TaskKind) -> int:
        caps = self.max_pairs_per_image_per_task
        if isinstance(caps, int):
            return caps
        return caps.get(task, 0)


@dataclass(frozen=True)
class GenerationResult:
    records: tuple[QARecord, ...]
    tally: Mapping[str, int]


def _derived(prefix: bytes, label: str) -> random.Random:
    digest = hashlib.blake2b(prefix + label.encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _rng_prefix(seed: int, image: ImageRef) -> bytes:
    return f"{seed}|{image.source_dataset}|{image.image_id}|".encode()


def derive_rng(seed: int, image: ImageRef, task: TaskKind | str) -> random.Random:
    """Independent, order-free stream per (seed, image, task)."""
    label = task.value if isinstance(task, TaskKind) else task
    return _derived(_rng_prefix(seed, image), label)


def _rand_index(rng: random.Random, n: int) -> int:
    # only rng.random(): its bit stream is stable across interpreter versions
    return min(int(rng.random() * n), n - 1)


def _selection_sample(items: Sequence[_T], k: int, rng: random.Random) -> list[_T]:
    """Uniform sample without replacement, deterministic in rng state."""
    n = len(items)
    k = min(k, n)
    if k <= 0:
        return []
    pool = list(items)
    for i in range(k):
        j = i + _rand_index(rng, n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def _choose_template(
    registry: TemplateRegistry, task: TaskKind, rng: random.Random
) -> QATemplate:
    options = registry.by_task(task)
    return options[_rand_index(rng, len(options))]


def _qa_id(image: ImageRef, task: TaskKind, template_id: str, object_ids: Sequence[int]) -> str:
    key = (
        f"{image.source_dataset}|{image.image_id}|{task.value}|{template_id}|"
        + ",".join(str(i) for i in object_ids)
    ).encode()
    digest = hashlib.blake2b(key, digest_size=6).hexdigest()
    return f"{image.source_dataset}/{image.image_id}/{task.value}-{digest}"


def _caption(obj: SceneObject) -> str:
    return obj.region_caption.strip() or obj.category


def _answer_boxes(
    template: QATemplate, box_bindings: Mapping[str, NormalizedBBox]
) -> tuple[NormalizedBBox, ...] | None:
    names = [
        n for n in placeholders(template.answer)
        if is_box_placeholder(n) and n in box_bindings
    ]
    if not names:
        return None
    return tuple(box_bindings[n] for n in names)


def _build(
    image: ImageRef,
    task: TaskKind,
    template: QATemplate,
    bindings: dict[str, str],
    box_bindings: Mapping[str, NormalizedBBox],
    object_ids: Sequence[int],
    flags: tuple[str, ...] = (),
) -> QARecord:
    question, answer = instantiate_template(template, bindings)
    return QARecord(
        qa_id=_qa_id(image, task, template.template_id, object_ids),
        image=image,
        task=task,
        question=question,
        answer=answer,
        object_ids=tuple(object_ids),
        template_id=template.template_id,
        answer_boxes=_answer_boxes(template, box_bindings),
        verified=False,
        flags=flags,
    )


def _duplicate_reference(
    scene: SceneRecord, template: QATemplate, obj: SceneObject
) -> bool:
    """True when the wording that identifies obj also fits another object."""
    names = set(placeholders(template.question)) | set(placeholders(template.answer))
    if "region_caption" in names:
        caption = _caption(obj)
        if sum(1 for o in scene.objects if _caption(o) == caption) > 1:
            return True
    if "category" in names:
        if sum(1 for o in scene.objects if o.category == obj.category) > 1:
            return True
    return False


def gen_grounding(
    scene: SceneRecord,
    obj: SceneObject,
    rng: random.Random,
    registry: TemplateRegistry | None = None,
    template: QATemplate | None = None,
) -> QARecord:
    """Description in the question, normalized box as the answer."""
    registry = registry or default_registry()
    template = template or _choose_template(registry, TaskKind.GROUNDING, rng)
    box = normalize_bbox(obj.bbox, scene.image.width, scene.image.height)
    bindings = {
        "region_caption": _caption(obj),
        "category": obj.category,
        "box": format_box(box),
    }
    flags = (NON_UNIQUE_REFERENCE,) if _duplicate_reference(scene, template, obj) else ()
    return _build(
        scene.image, TaskKind.GROUNDING, template, bindings, {"box": box},
        [obj.object_id], flags,
    )


def gen_referring(
    scene: SceneRecord,
    obj: SceneObject,
    rng: random.Random,
    registry: TemplateRegistry | None = None,
    template: QATemplate | None = None,
) -> QARecord:
    """Normalized box in the question, region caption as the answer."""
    registry = registry or default_registry()
    template = template or _choose_template(registry, TaskKind.REFERRING, rng)
    box = normalize_bbox(obj.bbox, scene.image.width, scene.image.height)
    bindings = {"box": format_box(box), "region_caption": _caption(obj)}
    flags = (NON_UNIQUE_REFERENCE,) if _duplicate_reference(scene, template, obj) else ()
    return _build(
        scene.image, TaskKind.REFERRING, template, bindings, {"box": box},
        [obj.object_id], flags,
    )


def gen_counting(
    scene: SceneRecord,
    category: str,
    rng: random.Random,
    registry: TemplateRegistry | None = None,
    template: QATemplate | None = None,
) -> QARecord | None:
    """Instance count per category; singleton categories yield nothing."""
    registry = registry or default_registry()
    members = sorted(
        (o for o in scene.objects if o.category == category),
        key=lambda o: o.object_id,
    )
    if len(members) <= 1:
        return None
    template = template or _choose_template(registry, TaskKind.COUNTING, rng)
    bindings = {"category": category, "count": str(len(members))}
    return _build(
        scene.image, TaskKind.COUNTING, template, bindings, {},
        [o.object_id for o in members],
    )


def _pair_bindings(
    scene: SceneRecord, a: SceneObject, b: SceneObject
) -> tuple[dict[str, str], dict[str, NormalizedBBox]]:
    box_a = normalize_bbox(a.bbox, scene.image.width, scene.image.height)
    box_b = normalize_bbox(b.bbox, scene.image.width, scene.image.height)
    text = {
        "caption_a": _caption(a),
        "caption_b": _caption(b),
        "box_a": format_box(box_a),
        "box_b": format_box(box_b),
    }
    return text, {"box_a": box_a, "box_b": box_b}


def gen_near_far(
    scene: SceneRecord,
    obj_a: SceneObject,
    obj_b: SceneObject,
    order: DepthOrder,
    rng: random.Random,
    registry: TemplateRegistry | None = None,
    template: QATemplate | None = None,
) -> QARecord | None:
    """Distance-order record; ambiguous or ClassD comparisons yield nothing."""
    registry = registry or default_registry()
    if order.quality is QualityClass.D or order.value is DepthOrderValue.AMBIGUOUS:
        return None
    template = template or _choose_template(registry, TaskKind.NEAR_FAR, rng)
    a_nearer = order.value is DepthOrderValue.A_NEARER
    nearer, farther = (obj_a, obj_b) if a_nearer else (obj_b, obj_a)
    text, boxes = _pair_bindings(scene, obj_a, obj_b)
    boxes = dict(boxes)
    boxes["nearer_box"] = boxes["box_a" if a_nearer else "box_b"]
    boxes["farther_box"] = boxes["box_b" if a_nearer else "box_a"]
    text.update(
        nearer_caption=_caption(nearer),
        farther_caption=_caption(farther),
        nearer_box=format_box(boxes["nearer_box"]),
        farther_box=format_box(boxes["farther_box"]),
        order_far_to_near="B, A" if a_nearer else "A, B",
        order_near_to_far="A, B" if a_nearer else "B, A",
    )
    return _build(
        scene.image, TaskKind.NEAR_FAR, template, text, boxes,
        [obj_a.object_id, obj_b.object_id],
    )


def gen_left_right(
    scene: SceneRecord,
    obj_a: SceneObject,
    obj_b: SceneObject,
    rel: LRValue,
    rng: random.Random,
    registry: TemplateRegistry | None = None,
    template: QATemplate | None = None,
) -> QARecord | None:
    """Camera-frame lateral-order record; rel is obj_a relative to obj_b."""
    registry = registry or default_registry()
    if rel is LRValue.AMBIGUOUS:
        return None
    template = template or _choose_template(registry, TaskKind.LEFT_RIGHT, rng)
    left_obj, right_obj = (obj_a, obj_b) if rel is LRValue.LEFT else (obj_b, obj_a)
    text, boxes = _pair_bindings(scene, obj_a, obj_b)
    boxes = dict(boxes)
    boxes["left_box"] = boxes["box_a" if rel is LRValue.LEFT else "box_b"]
    boxes["right_box"] = boxes["box_b" if rel is LRValue.LEFT else "box_a"]
    text.update(
        relation_a_to_b=rel.value,
        relation_b_to_a=(LRValue.RIGHT if rel is LRValue.LEFT else LRValue.LEFT).value,
        left_caption=_caption(left_obj),
        right_caption=_caption(right_obj),
        left_box=format_box(boxes["left_box"]),
        right_box=format_box(boxes["right_box"]),
    )
    return _build(
        scene.image, TaskKind.LEFT_RIGHT, template, text, boxes,
        [obj_a.object_id, obj_b.object_id],
    )


def gen_perspective(
    scene: SceneRecord,
    subject: SceneObject,
    target: SceneObject,
    rng: random.Random,
    registry: TemplateRegistry | None = None,
    template: QATemplate | None = None,
) -> QARecord | None:
    """Lateral order in the subject's own frame; needs a canonical facing."""
    registry = registry or default_registry()
    if not subject.is_person or subject.facing is None:
        return None
    facing = map_facing(subject.facing)
    if facing is None:
        return None
    # where the target sits relative to the subject, camera frame
    ego = left_right(target.bbox, subject.bbox)
    if ego is LRValue.AMBIGUOUS:
        return None
    template = template or _choose_template(registry, TaskKind.PERSPECTIVE, rng)
    subject_box = normalize_bbox(subject.bbox, scene.image.width, scene.image.height)
    target_box = normalize_bbox(target.bbox, scene.image.width, scene.image.height)
    bindings = {
        "subject_caption": _caption(subject),
        "target_caption": _caption(target),
        "subject_box": format_box(subject_box),
        "target_box": format_box(target_box),
        "allocentric": to_allocentric(ego, facing).value,
    }
    return _build(
        scene.image, TaskKind.PERSPECTIVE, template, bindings,
        {"subject_box": subject_box, "target_box": target_box},
        [subject.object_id, target.object_id],
    )


def _normalizable(obj: SceneObject, image: ImageRef) -> bool:
    try:
        normalize_bbox(obj.bbox, image.width, image.height)
    except ValueError:
        return False
    return True


def _perspective_eligible(subject: SceneObject) -> bool:
    return (
        subject.is_person
        and subject.facing is not None
        and map_facing(subject.facing) is not None
    )


def sample_pairs(
    scene: SceneRecord, policy: SamplingPolicy, rng: random.Random
) -> dict[TaskKind, list[tuple[SceneObject, SceneObject]]]:
    """Capped uniform pair samples for the three relational tasks.

    Eligibility is the statically checkable part: captions and usable
    boxes for all pairs, unambiguous lateral order where the task needs
    it, and a person subject with canonical facing for perspective
    pairs. Depth quality is only known once the depth map is read, so
    distance pairs are filtered after sampling.
    """
    base = [
        o for o in scene.objects
        if _caption(o) and _normalizable(o, scene.image)
    ]
    unordered = [
        (base[i], base[j])
        for i in range(len(base))
        for j in range(i + 1, len(base))
    ]
    lateral = [
        (a, b) for a, b in unordered
        if left_right(a.bbox, b.bbox) is not LRValue.AMBIGUOUS
    ]
    facing_subjects = [o for o in base if _perspective_eligible(o)]
    perspective = [
        (s, t)
        for s in facing_subjects
        for t in base
        if t.object_id != s.object_id
        and left_right(t.bbox, s.bbox) is not LRValue.AMBIGUOUS
    ]
    # fixed task order keeps the shared stream deterministic
    return {
        TaskKind.NEAR_FAR: _selection_sample(
            unordered, policy.cap(TaskKind.NEAR_FAR), rng
        ),
        TaskKind.LEFT_RIGHT: _selection_sample(
            lateral, policy.cap(TaskKind.LEFT_RIGHT), rng
        ),
        TaskKind.PERSPECTIVE: _selection_sample(
            perspective, policy.cap(TaskKind.PERSPECTIVE), rng
        ),
    }


def generate_for_scene(
    scene: SceneRecord,
    policy: SamplingPolicy | None = None,
    registry: TemplateRegistry | None = None,
    depth: DepthMap | None = None,
    reliability: ReliabilityThresholds | None = None,
) -> GenerationResult:
    """All records one scene yields, plus a tally of emissions and skips."""
    policy = policy or SamplingPolicy()
    registry = registry or default_registry()
    reliability = reliability or ReliabilityThresholds()
    if depth is not None and depth.convention is not DepthConvention.DISTANCE_INCREASING:
        depth = depth.canonicalized()
    tally: Counter[str] = Counter()
    records: list[QARecord] = []

    captioned = [
        o for o in scene.objects
        if o.region_caption.strip() and _normalizable(o, scene.image)
    ]
    tally["objects_without_caption"] = sum(
        1 for o in scene.objects if not o.region_caption.strip()
    )

    def emit(record: QARecord | None, task: TaskKind, drop_key: str) -> None:
        if record is None:
            tally[drop_key] += 1
        else:
            records.append(record)
            tally[f"emitted_{task.value}"] += 1

    rng_prefix = _rng_prefix(policy.seed, scene.image)

    for task, gen in (
        (TaskKind.GROUNDING, gen_grounding),
        (TaskKind.REFERRING, gen_referring),
    ):
        rng = _derived(rng_prefix, task.value)
        chosen = _selection_sample(captioned, policy.cap(task), rng)
        for obj in chosen:
            emit(gen(scene, obj, rng, registry), task, "never")

    rng_count = _derived(rng_prefix, TaskKind.COUNTING.value)
    categories = sorted({o.category for o in scene.objects if o.category})
    plural = [
        c for c in categories
        if sum(1 for o in scene.objects if o.category == c) > 1
    ]
    tally["counting_singletons"] = len(categories) - len(plural)
    for category in _selection_sample(plural, policy.cap(TaskKind.COUNTING), rng_count):
        emit(
            gen_counting(scene, category, rng_count, registry),
            TaskKind.COUNTING,
            "counting_dropped",
        )

    pairs = sample_pairs(scene, policy, derive_rng(policy.seed, scene.image, _PAIR_STREAM))

    rng_nf = derive_rng(policy.seed, scene.image, TaskKind.NEAR_FAR)
    if depth is None:
        tally["near_far_skipped_no_depth"] = len(pairs[TaskKind.NEAR_FAR])
    else:
        # objects recur across pairs; their per-box stats do not change
        stats_cache: dict[int, DepthStats] = {}

        def stats_for(obj) -> DepthStats:
            key = id(obj)
            if key not in stats_cache:
                stats_cache[key] = depth_stats(depth, obj.bbox)
            return stats_cache[key]

        for a, b in pairs[TaskKind.NEAR_FAR]:
            try:
                stats_a = stats_for(a)
                stats_b = stats_for(b)
            except EmptyRegionError:
                tally["near_far_empty_region"] += 1
                continue
            order = compare_depth(
                stats_a,
                stats_b,
                metric_reliability(stats_a, reliability),
                metric_reliability(stats_b, reliability),
            )
            if order.quality not in policy.min_depth_quality:
                tally["near_far_depth_quality"] += 1
                continue
            emit(
                gen_near_far(scene, a, b, order, rng_nf, registry),
                TaskKind.NEAR_FAR,
                "near_far_depth_quality",
            )

    rng_lr = derive_rng(policy.seed, scene.image, TaskKind.LEFT_RIGHT)
    for a, b in pairs[TaskKind.LEFT_RIGHT]:
        rel = left_right(a.bbox, b.bbox)
        emit(
            gen_left_right(scene, a, b, rel, rng_lr, registry),
            TaskKind.LEFT_RIGHT,
            "left_right_ambiguous",
        )

    rng_p = derive_rng(policy.seed, scene.image, TaskKind.PERSPECTIVE)
    for subject, target in pairs[TaskKind.PERSPECTIVE]:
        emit(
            gen_perspective(scene, subject, target, rng_p, registry),
            TaskKind.PERSPECTIVE,
            "perspective_ineligible",
        )

    return GenerationResult(records=tuple(records), tally=dict(tally))
