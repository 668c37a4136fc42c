"""Verification rules: IoU gate, text matching, judge handling."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialqa_forge.generate import SamplingPolicy, generate_for_scene
from spatialqa_forge.inspection import (
    Reason,
    Verdict,
    echo_judge,
    extract_box_from_judge,
    inspect,
    is_box_valued,
    mark_verified,
    mutation_judge,
    normalize_answer,
    rejection_line,
    unavailable_judge,
    verify_box_answer,
    verify_text_answer,
)
from spatialqa_forge.model import (
    BBox,
    DepthConvention,
    DepthMap,
    ImageRef,
    NormalizedBBox,
    QARecord,
    SceneObject,
    SceneRecord,
    TaskKind,
)
from spatialqa_forge.providers.base import TransportError
from spatialqa_forge.templates import format_box


def qa(task=TaskKind.REFERRING, answer="a red chair", boxes=None, verified=False):
    return QARecord(
        qa_id="demo/img-1/x-000000000000",
        image=ImageRef("demo", "img-1", "file:///x.jpg", 640, 480),
        task=task,
        question="q",
        answer=answer,
        object_ids=(0,),
        template_id="t",
        answer_boxes=boxes,
        verified=verified,
    )


class TestVerifyBox:
    def test_identity(self):
        b = NormalizedBBox(10, 20, 110, 220)
        assert verify_box_answer(b, b) == (True, 1.0)

    def test_hand_iou_third(self):
        passed, iou = verify_box_answer(
            NormalizedBBox(0, 0, 10, 10), NormalizedBBox(5, 0, 15, 10)
        )
        assert not passed
        assert iou == pytest.approx(1 / 3)

    def test_exact_threshold_inclusive(self):
        passed, iou = verify_box_answer(
            NormalizedBBox(0, 0, 100, 80), NormalizedBBox(0, 0, 100, 100)
        )
        assert iou == pytest.approx(0.8)
        assert passed


class TestNormalize:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Left ", "left"),
            ("  On   the LEFT. ", "on the left"),
            ("Three!", "3"),
            ("twenty", "20"),
            ("3", "3"),
            ("B, A", "b, a"),
        ],
    )
    def test_examples(self, raw, expected):
        assert normalize_answer(raw) == expected

    def test_text_verify_examples(self):
        assert verify_text_answer("Left ", "left")
        assert verify_text_answer("three", "3")
        assert not verify_text_answer("left", "right")

    @given(st.text(alphabet="abc left right 123.,!? ", max_size=30))
    @settings(max_examples=80)
    def test_reflexive_and_symmetric(self, text):
        assert verify_text_answer(text, text)
        assert verify_text_answer(text, " " + text.upper() + " ") == \
            verify_text_answer(" " + text.upper() + " ", text)


class TestExtractBox:
    def test_direct(self):
        box, warned = extract_box_from_judge("sure: <box>[10, 20, 30, 40]</box>")
        assert box.as_list() == [10, 20, 30, 40]
        assert not warned

    def test_absent(self):
        assert extract_box_from_judge("no boxes here") == (None, False)

    def test_wrong_arity_warns(self):
        assert extract_box_from_judge("<box>[10, 20]</box>") == (None, True)

    def test_non_numeric_warns(self):
        assert extract_box_from_judge("<box>[a, b, c, d]</box>") == (None, True)

    def test_clamps_to_grid(self):
        box, warned = extract_box_from_judge("<box>[-5, 0, 1200, 40]</box>")
        assert box.as_list() == [0, 0, 1000, 40]
        assert not warned

    def test_rounds_floats(self):
        box, _ = extract_box_from_judge("<box>[10.5, 20.4, 30.0, 40.9]</box>")
        assert box.as_list() == [11, 20, 30, 41]

    def test_first_box_wins(self):
        box, _ = extract_box_from_judge(
            "<box>[1, 2, 3, 4]</box> then <box>[5, 6, 7, 8]</box>"
        )
        assert box.as_list() == [1, 2, 3, 4]


class TestVerdict:
    def test_passed_must_mirror_reason(self):
        with pytest.raises(ValueError):
            Verdict("x", True, "a", None, Reason.TEXT_MISMATCH)
        with pytest.raises(ValueError):
            Verdict("x", False, "a", None, Reason.PASSED)

    def test_rejection_line_shape(self):
        v = Verdict("demo/1", False, "bad", 0.5, Reason.IOU_BELOW_THRESHOLD)
        row = json.loads(rejection_line(v))
        assert row == {"qa_id": "demo/1", "reason": "iou_below_threshold", "score": 0.5}


class TestInspect:
    def test_echo_judge_passes_text(self):
        v = inspect(qa(), echo_judge)
        assert v.passed and v.reason is Reason.PASSED and v.score is None

    def test_echo_judge_passes_box(self):
        record = qa(
            task=TaskKind.GROUNDING,
            answer=format_box(NormalizedBBox(100, 100, 500, 500)),
            boxes=(NormalizedBBox(100, 100, 500, 500),),
        )
        v = inspect(record, echo_judge)
        assert v.passed and v.score == 1.0

    def test_half_iou_fails(self):
        record = qa(
            task=TaskKind.GROUNDING,
            answer=format_box(NormalizedBBox(0, 0, 100, 100)),
            boxes=(NormalizedBBox(0, 0, 100, 100),),
        )
        v = inspect(record, lambda r: "<box>[0, 0, 100, 50]</box>")
        assert not v.passed
        assert v.reason is Reason.IOU_BELOW_THRESHOLD
        assert v.score == pytest.approx(0.5)

    def test_text_mismatch(self):
        v = inspect(qa(answer="left"), lambda r: "right")
        assert not v.passed and v.reason is Reason.TEXT_MISMATCH

    def test_judge_without_box_fails_box_task(self):
        record = qa(
            task=TaskKind.GROUNDING,
            answer=format_box(NormalizedBBox(0, 0, 100, 100)),
            boxes=(NormalizedBBox(0, 0, 100, 100),),
        )
        v = inspect(record, lambda r: "somewhere on the left")
        assert not v.passed and v.score == 0.0

    def test_unavailable_judge_quarantines(self):
        v = inspect(qa(), unavailable_judge)
        assert not v.passed
        assert v.reason is Reason.JUDGE_UNAVAILABLE

    def test_transport_error_quarantines(self):
        def judge(record):
            raise TransportError("timeout")

        v = inspect(qa(), judge)
        assert v.reason is Reason.JUDGE_UNAVAILABLE

    def test_refuses_already_verified(self):
        with pytest.raises(ValueError):
            inspect(qa(verified=True), echo_judge)

    def test_mark_verified(self):
        assert mark_verified(qa()).verified

    def test_box_routing(self):
        assert is_box_valued(qa(task=TaskKind.GROUNDING, answer="<box>[0, 0, 9, 9]</box>"))
        assert is_box_valued(qa(task=TaskKind.NEAR_FAR,
                                answer="<box>[0, 0, 9, 9]</box>",
                                boxes=(NormalizedBBox(0, 0, 9, 9),)))
        assert not is_box_valued(qa(task=TaskKind.REFERRING, answer="a chair"))


class TestMutationJudge:
    @pytest.mark.parametrize(
        "answer,expected",
        [
            ("left", "right"),
            ("right", "left"),
            ("3", "4"),
            ("A, B", "B, A"),
            ("B, A", "A, B"),
            ("small brown dog", "certainly not small brown dog"),
        ],
    )
    def test_text_mutations_contradict(self, answer, expected):
        record = qa(answer=answer)
        assert mutation_judge(record) == expected
        assert not inspect(record, mutation_judge).passed

    @given(
        st.integers(0, 950), st.integers(0, 950),
        st.integers(50, 1000), st.integers(50, 1000),
    )
    @settings(max_examples=120)
    def test_box_mutation_always_rejected(self, x0, y0, w, h):
        gold = NormalizedBBox(x0, y0, min(1000, x0 + w), min(1000, y0 + h))
        record = qa(task=TaskKind.GROUNDING, answer=format_box(gold), boxes=(gold,))
        v = inspect(record, mutation_judge)
        assert not v.passed
        assert v.score < 0.8


class TestCorpusLevelGate:
    def _scene(self):
        img = ImageRef("demo", "scene-7", "file:///s7.jpg", 640, 480)
        objs = (
            SceneObject(0, "person", BBox(40, 100, 160, 420), "man in a blue jacket",
                        is_person=True, facing="front"),
            SceneObject(1, "dog", BBox(240, 260, 360, 400), "small brown dog"),
            SceneObject(2, "car", BBox(420, 180, 620, 380), "red parked car"),
            SceneObject(3, "dog", BBox(500, 60, 600, 160), "white dog on a ledge"),
        )
        vals = np.tile(np.linspace(1.0, 9.0, 640, dtype=np.float32), (480, 1))
        depth = DepthMap(640, 480, vals, DepthConvention.DISTANCE_INCREASING)
        return SceneRecord(img, "a street scene", objs), depth

    def test_echo_judge_passes_everything(self):
        scene, depth = self._scene()
        res = generate_for_scene(scene, SamplingPolicy(seed=3), depth=depth)
        assert res.records
        for record in res.records:
            assert inspect(record, echo_judge).passed

    def test_mutation_judge_rejects_everything(self):
        scene, depth = self._scene()
        res = generate_for_scene(scene, SamplingPolicy(seed=3), depth=depth)
        for record in res.records:
            v = inspect(record, mutation_judge)
            assert not v.passed, (record.task, record.answer, v)
