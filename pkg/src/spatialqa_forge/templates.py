"""Versioned question/answer templates for the six task families.

Templates are plain format strings over a closed, per-task placeholder
vocabulary. The registry ships as a structured text asset so the set is
frozen and auditable; generation never invents wording at runtime.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import yaml

from .model import NormalizedBBox, TaskKind

# A registry must offer at least this many ways to phrase each task.
MIN_TEMPLATES_PER_TASK = 3

# Placeholders each task's generator knows how to bind, by pattern side.
QUESTION_PLACEHOLDERS: dict[TaskKind, frozenset[str]] = {
    TaskKind.GROUNDING: frozenset({"region_caption", "category"}),
    TaskKind.REFERRING: frozenset({"box"}),
    TaskKind.COUNTING: frozenset({"category"}),
    TaskKind.NEAR_FAR: frozenset({"caption_a", "caption_b", "box_a", "box_b"}),
    TaskKind.LEFT_RIGHT: frozenset({"caption_a", "caption_b", "box_a", "box_b"}),
    TaskKind.PERSPECTIVE: frozenset(
        {"subject_caption", "subject_box", "target_caption", "target_box"}
    ),
}
ANSWER_PLACEHOLDERS: dict[TaskKind, frozenset[str]] = {
    TaskKind.GROUNDING: frozenset({"box"}),
    TaskKind.REFERRING: frozenset({"region_caption"}),
    TaskKind.COUNTING: frozenset({"count"}),
    TaskKind.NEAR_FAR: frozenset(
        {
            "nearer_caption",
            "farther_caption",
            "nearer_box",
            "farther_box",
            "order_far_to_near",
            "order_near_to_far",
        }
    ),
    TaskKind.LEFT_RIGHT: frozenset(
        {
            "relation_a_to_b",
            "relation_b_to_a",
            "left_caption",
            "right_caption",
            "left_box",
            "right_box",
        }
    ),
    TaskKind.PERSPECTIVE: frozenset({"allocentric"}),
}

# Camera-frame anchor every lateral-order question must carry.
CAMERA_ANCHOR = "From the camera viewpoint"


class TemplateError(ValueError):
    """Registry or instantiation failure with a stable machine code."""

    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True, slots=True)
class QATemplate:
    template_id: str
    task: TaskKind
    question: str
    answer: str


@dataclass(frozen=True, slots=True)
class TemplateRegistry:
    version: str
    templates: tuple[QATemplate, ...]
    # per-task view, built once; excluded from equality and hashing
    _task_index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        index: dict[TaskKind, tuple[QATemplate, ...]] = {}
        for t in self.templates:
            index.setdefault(t.task, [])
            index[t.task].append(t)
        object.__setattr__(
            self, "_task_index", {k: tuple(v) for k, v in index.items()}
        )

    def by_task(self, task: TaskKind) -> tuple[QATemplate, ...]:
        return self._task_index.get(task, ())

    def get(self, template_id: str) -> QATemplate:
        for t in self.templates:
            if t.template_id == template_id:
                return t
        raise KeyError(template_id)


def format_box(box: NormalizedBBox) -> str:
    """Canonical wire form for a box inside question/answer text."""
    return f"<box>[{box.x_min}, {box.y_min}, {box.x_max}, {box.y_max}]</box>"


def is_box_placeholder(name: str) -> bool:
    return name == "box" or name.endswith("_box")


@lru_cache(maxsize=None)
def placeholders(pattern: str) -> tuple[str, ...]:
    """Placeholder names in order of appearance (duplicates collapsed)."""
    seen: list[str] = []
    for _, field_name, format_spec, conversion in string.Formatter().parse(pattern):
        if field_name is None:
            continue
        if not field_name or not field_name.isidentifier() or format_spec or conversion:
            raise TemplateError(
                f"unsupported placeholder {field_name!r} in {pattern!r}",
                code="bad_placeholder",
            )
        if field_name not in seen:
            seen.append(field_name)
    return tuple(seen)


@lru_cache(maxsize=None)
def _needed_names(question: str, answer: str) -> frozenset[str]:
    return frozenset(placeholders(question)) | frozenset(placeholders(answer))


def instantiate_template(
    t: QATemplate, bindings: dict[str, str], strict: bool = False
) -> tuple[str, str]:
    """Fill both patterns; every placeholder must have a binding."""
    needed = _needed_names(t.question, t.answer)
    missing = sorted(needed - bindings.keys())
    if missing:
        raise TemplateError(
            f"template {t.template_id}: no binding for {', '.join(missing)}",
            code="missing_binding",
        )
    if strict:
        unused = sorted(bindings.keys() - needed)
        if unused:
            raise TemplateError(
                f"template {t.template_id}: unused binding {', '.join(unused)}",
                code="unused_binding",
            )
    used = {k: bindings[k] for k in needed}
    return t.question.format(**used), t.answer.format(**used)


def _validate(version: str, templates: tuple[QATemplate, ...]) -> None:
    seen_ids: set[str] = set()
    for t in templates:
        if t.template_id in seen_ids:
            raise TemplateError(
                f"duplicate template id {t.template_id!r}", code="duplicate_id"
            )
        seen_ids.add(t.template_id)
        q_allowed = QUESTION_PLACEHOLDERS[t.task]
        a_allowed = ANSWER_PLACEHOLDERS[t.task]
        q_used = placeholders(t.question)
        a_used = placeholders(t.answer)
        bad = (set(q_used) - q_allowed) | (set(a_used) - a_allowed)
        if bad:
            raise TemplateError(
                f"template {t.template_id}: placeholder(s) {sorted(bad)} not "
                f"bindable for task {t.task.value}",
                code="unknown_placeholder",
            )
        if not a_used:
            raise TemplateError(
                f"template {t.template_id}: answer pattern binds nothing",
                code="static_answer",
            )
        if t.task is TaskKind.LEFT_RIGHT and CAMERA_ANCHOR not in t.question:
            raise TemplateError(
                f"template {t.template_id}: lateral-order questions must be "
                f"anchored with {CAMERA_ANCHOR!r}",
                code="missing_camera_anchor",
            )
    for task in TaskKind:
        n = sum(1 for t in templates if t.task is task)
        if n < MIN_TEMPLATES_PER_TASK:
            raise TemplateError(
                f"task {task.value} has {n} templates, needs at least "
                f"{MIN_TEMPLATES_PER_TASK}",
                code="too_few_templates",
            )


def build_registry(version: str, items: list[dict]) -> TemplateRegistry:
    """Assemble and validate a registry from decoded structured text."""
    by_value = {k.value: k for k in TaskKind}
    templates: list[QATemplate] = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise TemplateError(f"templates[{i}] is not a mapping", code="bad_registry")
        for key in ("id", "task", "question", "answer"):
            if not isinstance(item.get(key), str) or not item[key].strip():
                raise TemplateError(
                    f"templates[{i}] missing field {key!r}", code="bad_registry"
                )
        if item["task"] not in by_value:
            raise TemplateError(
                f"templates[{i}]: unknown task {item['task']!r}", code="unknown_task"
            )
        templates.append(
            QATemplate(
                template_id=item["id"],
                task=by_value[item["task"]],
                question=item["question"],
                answer=item["answer"],
            )
        )
    registry = TemplateRegistry(version=version, templates=tuple(templates))
    _validate(version, registry.templates)
    return registry


def load_registry(path: str | Path | None = None) -> TemplateRegistry:
    """Load a registry file; with no path, the packaged default set."""
    if path is None:
        text = (
            resources.files("spatialqa_forge")
            .joinpath("assets", "templates.yaml")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise TemplateError(f"registry is not valid YAML: {e}", code="bad_registry")
    if not isinstance(data, dict) or "version" not in data or "templates" not in data:
        raise TemplateError(
            "registry must be a mapping with 'version' and 'templates'",
            code="bad_registry",
        )
    if not isinstance(data["templates"], list):
        raise TemplateError("'templates' must be a list", code="bad_registry")
    return build_registry(str(data["version"]), data["templates"])


_DEFAULT: TemplateRegistry | None = None


def default_registry() -> TemplateRegistry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_registry()
    return _DEFAULT
