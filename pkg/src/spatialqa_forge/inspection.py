"""Answer verification against an independent judge.

A record only reaches final output after an independent model answers the
same question and the two answers agree: boxes by IoU on the normalized
grid, text by exact match after a fixed normalization. A judge that cannot
answer quarantines the record rather than passing it through.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Callable

from .geometry import bbox_iou, round_half_up
from .model import NormalizedBBox, QARecord, TaskKind
from .providers.base import ProviderError

IOU_THRESHOLD = 0.8

_BOX_TOKEN_RE = re.compile(r"<box>\[([^\]]*)\]</box>")

# closed table; version with care, verified corpora depend on it
_NUMBER_WORDS = {
    "zero": "0", "one": "1", "two": "2", "three": "3", "four": "4",
    "five": "5", "six": "6", "seven": "7", "eight": "8", "nine": "9",
    "ten": "10", "eleven": "11", "twelve": "12", "thirteen": "13",
    "fourteen": "14", "fifteen": "15", "sixteen": "16", "seventeen": "17",
    "eighteen": "18", "nineteen": "19", "twenty": "20",
}

_TERMINAL_PUNCT = ".!?,;:"


class Reason(enum.Enum):
    PASSED = "passed"
    IOU_BELOW_THRESHOLD = "iou_below_threshold"
    TEXT_MISMATCH = "text_mismatch"
    JUDGE_UNAVAILABLE = "judge_unavailable"


@dataclass(frozen=True, slots=True)
class Verdict:
    qa_id: str
    passed: bool
    judge_answer: str
    score: float | None
    reason: Reason

    def __post_init__(self):
        if self.passed != (self.reason is Reason.PASSED):
            raise ValueError("passed must mirror reason")


def normalize_answer(text: str) -> str:
    """Trim, casefold, collapse whitespace, strip terminal punctuation,
    and spell small counts as digits."""
    out = " ".join(text.casefold().split())
    out = out.rstrip(_TERMINAL_PUNCT).rstrip()
    tokens = [_NUMBER_WORDS.get(tok, tok) for tok in out.split(" ")]
    return " ".join(tokens)


def verify_text_answer(predicted: str, gold: str) -> bool:
    if predicted == gold:
        return True
    return normalize_answer(predicted) == normalize_answer(gold)


def verify_box_answer(
    predicted: NormalizedBBox, gold: NormalizedBBox, threshold: float = IOU_THRESHOLD
) -> tuple[bool, float]:
    iou = bbox_iou(predicted, gold)
    return iou >= threshold, iou


def extract_box_from_judge(text: str) -> tuple[NormalizedBBox | None, bool]:
    """First box payload in free text, clamped to the grid.

    Returns (box, malformed): malformed is True when a box token exists
    but its payload does not parse, so callers can count parse warnings.
    """
    m = _BOX_TOKEN_RE.search(text)
    if m is None:
        return None, False
    parts = [p.strip() for p in m.group(1).split(",")]
    if len(parts) != 4:
        return None, True
    try:
        coords = [round_half_up(float(p)) for p in parts]
    except ValueError:
        return None, True
    clamped = [min(1000, max(0, c)) for c in coords]
    return NormalizedBBox(*clamped), False


def _gold_box(record: QARecord) -> NormalizedBBox | None:
    if record.answer_boxes:
        return record.answer_boxes[0]
    box, _ = extract_box_from_judge(record.answer)
    return box


def is_box_valued(record: QARecord) -> bool:
    return record.task is TaskKind.GROUNDING or _gold_box(record) is not None


def inspect(
    record: QARecord,
    judge: Callable[[QARecord], str],
    threshold: float = IOU_THRESHOLD,
) -> Verdict:
    """Ask the judge and compare; box tasks by IoU, the rest by text."""
    if record.verified:
        raise ValueError(f"{record.qa_id} is already verified")
    try:
        reply = judge(record)
    except ProviderError:
        return Verdict(
            qa_id=record.qa_id,
            passed=False,
            judge_answer="",
            score=None,
            reason=Reason.JUDGE_UNAVAILABLE,
        )

    gold_box = _gold_box(record)
    if record.task is TaskKind.GROUNDING or gold_box is not None:
        predicted, _malformed = extract_box_from_judge(reply)
        if gold_box is None or predicted is None:
            return Verdict(record.qa_id, False, reply, 0.0, Reason.IOU_BELOW_THRESHOLD)
        passed, iou = verify_box_answer(predicted, gold_box, threshold)
        reason = Reason.PASSED if passed else Reason.IOU_BELOW_THRESHOLD
        return Verdict(record.qa_id, passed, reply, iou, reason)

    passed = verify_text_answer(reply, record.answer)
    reason = Reason.PASSED if passed else Reason.TEXT_MISMATCH
    return Verdict(record.qa_id, passed, reply, None, reason)


def mark_verified(record: QARecord) -> QARecord:
    return QARecord(
        qa_id=record.qa_id,
        image=record.image,
        task=record.task,
        question=record.question,
        answer=record.answer,
        object_ids=record.object_ids,
        template_id=record.template_id,
        answer_boxes=record.answer_boxes,
        verified=True,
        flags=record.flags,
    )


def rejection_line(verdict: Verdict) -> str:
    """One audit-log line for a non-passing verdict."""
    return json.dumps(
        {"qa_id": verdict.qa_id, "reason": verdict.reason.value, "score": verdict.score},
        sort_keys=True,
        ensure_ascii=False,
    )


# --- judge doubles -----------------------------------------------------
# Used by fixture pipelines and tests: the echo judge models perfect
# agreement, the mutation judge models a contradicting expert, the
# unavailable judge models an outage.


def echo_judge(record: QARecord) -> str:
    return record.answer


def unavailable_judge(record: QARecord) -> str:
    raise ProviderError("judge offline")


def _shift_box(box: NormalizedBBox) -> NormalizedBBox:
    """Translate by 60% of the box's extent; guaranteed IoU < 0.8."""
    w = box.x_max - box.x_min
    h = box.y_max - box.y_min
    dx = round_half_up(0.6 * w)
    if box.x_max + dx <= 1000:
        return NormalizedBBox(box.x_min + dx, box.y_min, box.x_max + dx, box.y_max)
    if box.x_min - dx >= 0:
        return NormalizedBBox(box.x_min - dx, box.y_min, box.x_max - dx, box.y_max)
    dy = round_half_up(0.6 * h)
    if box.y_max + dy <= 1000:
        return NormalizedBBox(box.x_min, box.y_min + dy, box.x_max, box.y_max + dy)
    return NormalizedBBox(box.x_min, box.y_min - dy, box.x_max, box.y_max - dy)


_WORD_FLIPS = {"left": "right", "right": "left"}


def mutation_judge(record: QARecord) -> str:
    """Contradict the gold answer in a way normalization cannot erase."""
    gold_box = _gold_box(record)
    if record.task is TaskKind.GROUNDING or gold_box is not None:
        from .templates import format_box

        return format_box(_shift_box(gold_box))
    tokens = record.answer.split(" ")
    if any(t.casefold() in _WORD_FLIPS for t in tokens):
        return " ".join(_WORD_FLIPS.get(t.casefold(), t) for t in tokens)
    stripped = record.answer.strip()
    if stripped.isdigit():
        return str(int(stripped) + 1)
    if stripped in ("A, B", "B, A"):
        return "B, A" if stripped == "A, B" else "A, B"
    return "certainly not " + record.answer
