"""Template registry and instantiation behavior."""

from __future__ import annotations

import pytest

from spatialqa_forge.model import NormalizedBBox, TaskKind
from spatialqa_forge.templates import (
    ANSWER_PLACEHOLDERS,
    CAMERA_ANCHOR,
    MIN_TEMPLATES_PER_TASK,
    QATemplate,
    TemplateError,
    build_registry,
    default_registry,
    format_box,
    instantiate_template,
    is_box_placeholder,
    load_registry,
    placeholders,
)


def _dummy_bindings(names):
    return {
        n: format_box(NormalizedBBox(100, 200, 300, 400)) if is_box_placeholder(n) else "thing"
        for n in names
    }


class TestFormatBox:
    def test_canonical_payload(self):
        assert (
            format_box(NormalizedBBox(100, 200, 300, 400))
            == "<box>[100, 200, 300, 400]</box>"
        )

    def test_box_placeholder_names(self):
        assert is_box_placeholder("box")
        assert is_box_placeholder("nearer_box")
        assert not is_box_placeholder("caption_a")
        assert not is_box_placeholder("boxer")


class TestPlaceholders:
    def test_order_and_dedup(self):
        assert placeholders("{a} then {b} then {a}") == ("a", "b")

    def test_plain_text_has_none(self):
        assert placeholders("no holes here") == ()

    @pytest.mark.parametrize("pattern", ["{}", "{0}", "{a:>4}", "{a!r}", "{a.b}"])
    def test_fancy_fields_rejected(self, pattern):
        with pytest.raises(TemplateError) as err:
            placeholders(pattern)
        assert err.value.code == "bad_placeholder"


class TestDefaultRegistry:
    def test_loads_with_enough_per_task(self):
        reg = load_registry()
        assert reg.version == "1"
        for task in TaskKind:
            assert len(reg.by_task(task)) >= 5

    def test_ids_unique(self):
        reg = load_registry()
        ids = [t.template_id for t in reg.templates]
        assert len(ids) == len(set(ids))

    def test_lateral_questions_are_camera_anchored(self):
        reg = load_registry()
        for t in reg.by_task(TaskKind.LEFT_RIGHT):
            assert CAMERA_ANCHOR in t.question

    def test_every_template_fully_substitutes(self):
        reg = load_registry()
        for t in reg.templates:
            names = set(placeholders(t.question)) | set(placeholders(t.answer))
            q, a = instantiate_template(t, _dummy_bindings(names))
            assert "{" not in q and "}" not in q
            assert "{" not in a and "}" not in a

    def test_get_by_id(self):
        reg = load_registry()
        t = reg.get("counting.how_many_photo.v1")
        assert t.task is TaskKind.COUNTING
        with pytest.raises(KeyError):
            reg.get("nope.v9")

    def test_default_registry_cached(self):
        assert default_registry() is default_registry()

    def test_load_from_path(self, tmp_path):
        p = tmp_path / "reg.yaml"
        p.write_text(
            "version: '2'\ntemplates:\n"
            + "".join(
                f"  - id: t{task.value}{i}\n"
                f"    task: {task.value}\n"
                f"    question: \"{q}\"\n"
                f"    answer: \"{a}\"\n"
                for task, q, a in [
                    (TaskKind.GROUNDING, "Find the {region_caption}.", "{box}"),
                    (TaskKind.REFERRING, "Describe {box}.", "{region_caption}"),
                    (TaskKind.COUNTING, "How many {category}?", "{count}"),
                    (TaskKind.NEAR_FAR, "Closer, {caption_a} or {caption_b}?", "{nearer_caption}"),
                    (TaskKind.LEFT_RIGHT, "From the camera viewpoint, is {caption_a} left or right of {caption_b}?", "{relation_a_to_b}"),
                    (TaskKind.PERSPECTIVE, "As {subject_caption} at {subject_box}, is {target_caption} at {target_box} left or right?", "{allocentric}"),
                ]
                for i in range(MIN_TEMPLATES_PER_TASK)
            )
        )
        reg = load_registry(p)
        assert reg.version == "2"
        assert len(reg.templates) == 6 * MIN_TEMPLATES_PER_TASK


def _minimal_items():
    rows = []
    for task, q, a in [
        (TaskKind.GROUNDING, "Find the {region_caption}.", "{box}"),
        (TaskKind.REFERRING, "Describe {box}.", "{region_caption}"),
        (TaskKind.COUNTING, "How many {category}?", "{count}"),
        (TaskKind.NEAR_FAR, "Closer, {caption_a} or {caption_b}?", "{nearer_caption}"),
        (TaskKind.LEFT_RIGHT, "From the camera viewpoint, is {caption_a} left or right of {caption_b}?", "{relation_a_to_b}"),
        (TaskKind.PERSPECTIVE, "As {subject_caption} at {subject_box}, is {target_caption} at {target_box} left or right?", "{allocentric}"),
    ]:
        for i in range(MIN_TEMPLATES_PER_TASK):
            rows.append(
                {"id": f"t.{task.value}.{i}", "task": task.value, "question": q, "answer": a}
            )
    return rows


class TestRegistryValidation:
    def test_minimal_accepted(self):
        reg = build_registry("x", _minimal_items())
        assert len(reg.templates) == 6 * MIN_TEMPLATES_PER_TASK

    def test_unknown_task_refused(self):
        items = _minimal_items()
        items[0]["task"] = "sorting"
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "unknown_task"

    def test_unknown_placeholder_refused(self):
        items = _minimal_items()
        items[0]["question"] = "Find the {color} one."
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "unknown_placeholder"

    def test_duplicate_id_refused(self):
        items = _minimal_items()
        items[1]["id"] = items[0]["id"]
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "duplicate_id"

    def test_too_few_templates_refused(self):
        items = _minimal_items()[1:]  # drop one grounding row
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "too_few_templates"

    def test_static_answer_refused(self):
        items = _minimal_items()
        items[0]["answer"] = "always this"
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "static_answer"

    def test_missing_camera_anchor_refused(self):
        items = _minimal_items()
        for r in items:
            if r["task"] == TaskKind.LEFT_RIGHT.value:
                r["question"] = "Is {caption_a} left or right of {caption_b}?"
                break
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "missing_camera_anchor"

    def test_missing_field_refused(self):
        items = _minimal_items()
        del items[0]["question"]
        with pytest.raises(TemplateError) as err:
            build_registry("x", items)
        assert err.value.code == "bad_registry"

    def test_bad_yaml_refused(self, tmp_path):
        p = tmp_path / "broken.yaml"
        p.write_text("version: '1'\ntemplates: {not a list}")
        with pytest.raises(TemplateError) as err:
            load_registry(p)
        assert err.value.code == "bad_registry"


class TestInstantiate:
    def test_counting_example(self):
        t = default_registry().get("counting.how_many_photo.v1")
        q, a = instantiate_template(t, {"category": "cat", "count": "3"})
        assert q == "How many cat can be seen in this photo?"
        assert a == "3"

    def test_box_substitution(self):
        t = QATemplate("x", TaskKind.REFERRING, "Describe {box}.", "{region_caption}")
        q, _ = instantiate_template(
            t, {"box": format_box(NormalizedBBox(100, 200, 300, 400)), "region_caption": "a"}
        )
        assert "<box>[100, 200, 300, 400]</box>" in q

    def test_missing_binding(self):
        t = default_registry().get("counting.how_many_photo.v1")
        with pytest.raises(TemplateError) as err:
            instantiate_template(t, {"count": "3"})
        assert err.value.code == "missing_binding"
        assert "category" in str(err.value)

    def test_strict_unused_binding(self):
        t = default_registry().get("counting.how_many_photo.v1")
        bindings = {"category": "cat", "count": "3", "extra": "y"}
        with pytest.raises(TemplateError) as err:
            instantiate_template(t, bindings, strict=True)
        assert err.value.code == "unused_binding"
        # non-strict path tolerates the surplus
        q, a = instantiate_template(t, bindings)
        assert (q, a) == ("How many cat can be seen in this photo?", "3")

    def test_answer_placeholder_tables_cover_all_tasks(self):
        assert set(ANSWER_PLACEHOLDERS) == set(TaskKind)
