"""Post-run invariant checks over a run directory.

Everything here re-derives its expectations from the artifacts alone —
output shards are recounted independently of stats.json, so a bug that
corrupted either one surfaces as a disagreement between them.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from ..model import RecordError, TaskKind, parse_qa_record
from .checkpoint import Checkpoint
from .config import content_hash
from .sharding import shard_of
from .stats import STAGES, RunStats


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _shard_files(directory: Path) -> list[tuple[int, Path]]:
    out = []
    if directory.exists():
        for path in sorted(directory.glob("shard-*.jsonl")):
            out.append((int(path.stem.split("-")[1]), path))
    return out


def audit_run(run_dir: str | Path) -> list[CheckResult]:
    root = Path(run_dir)
    results: list[CheckResult] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        results.append(CheckResult(name, ok, detail))

    snapshot_path = root / "config.snapshot.json"
    registry_path = root / "templates.snapshot.yaml"
    stats_path = root / "stats.json"
    missing = [p.name for p in (snapshot_path, registry_path, stats_path) if not p.exists()]
    check("layout", not missing, "complete" if not missing else f"missing {missing}")
    if missing:
        return results

    snapshot_text = snapshot_path.read_text()
    registry_text = registry_path.read_text()
    try:
        snapshot = json.loads(snapshot_text)
        shard_count = int(snapshot["shard_count"])
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        check("config_snapshot", False, str(exc))
        return results
    check("config_snapshot", True, f"{shard_count} shard(s)")

    try:
        stats = RunStats.from_dict(json.loads(stats_path.read_text()))
    except (json.JSONDecodeError, ValueError) as exc:
        check("stats_parse", False, str(exc))
        return results
    check("stats_parse", True)

    conservation_errors = []
    for name in STAGES:
        s = stats.stages[name]
        if s.attempted != s.emitted + s.rejected + s.quarantined:
            conservation_errors.append(name)
    check(
        "stats_conservation",
        not conservation_errors,
        "attempted = emitted + rejected + quarantined per stage"
        if not conservation_errors
        else f"violated in: {conservation_errors}",
    )

    # --- verified output shards ------------------------------------------
    qa_files = _shard_files(root / "qa")
    check("qa_shards_present", bool(qa_files), f"{len(qa_files)} file(s)")
    recount: Counter = Counter()
    seen_ids: set[str] = set()
    parse_errors = 0
    unverified = 0
    misplaced = 0
    duplicate_ids = 0
    gate_errors: list[str] = []
    total_records = 0
    for shard_id, path in qa_files:
        for line_no, line in enumerate(path.read_text().splitlines(), start=1):
            total_records += 1
            try:
                qa = parse_qa_record(line)
            except RecordError:
                parse_errors += 1
                continue
            if not qa.verified:
                unverified += 1
            if qa.qa_id in seen_ids:
                duplicate_ids += 1
            seen_ids.add(qa.qa_id)
            if (
                shard_of(qa.image.source_dataset, qa.image.image_id, shard_count)
                != shard_id
            ):
                misplaced += 1
            recount[(qa.image.source_dataset, qa.task.value)] += 1
            if qa.task is TaskKind.COUNTING:
                if not qa.answer.strip().isdigit() or int(qa.answer) <= 1:
                    gate_errors.append(f"{qa.qa_id}: counting answer {qa.answer!r}")
            if qa.task is TaskKind.PERSPECTIVE and qa.answer not in ("left", "right"):
                gate_errors.append(f"{qa.qa_id}: perspective answer {qa.answer!r}")
            has_box_text = "<box>" in qa.answer
            has_box_field = bool(qa.answer_boxes)
            if has_box_text != has_box_field:
                gate_errors.append(f"{qa.qa_id}: answer_boxes/text disagree")
            if not qa.answer.strip():
                gate_errors.append(f"{qa.qa_id}: empty answer")

    check("qa_parse", parse_errors == 0, f"{total_records} record(s)")
    check("qa_verified_flag", unverified == 0)
    check("qa_id_unique", duplicate_ids == 0)
    check("qa_shard_placement", misplaced == 0, "identity hash matches shard file")
    check(
        "qa_gates",
        not gate_errors,
        "counting > 1, perspective in {left,right}, box fields consistent"
        if not gate_errors
        else "; ".join(gate_errors[:3]),
    )

    matrix_ok = recount == +stats.matrix
    check(
        "stats_matches_recount",
        matrix_ok,
        f"{sum(recount.values())} verified record(s)"
        if matrix_ok
        else f"stats {dict(stats.matrix)} vs recount {dict(recount)}",
    )
    check(
        "verify_emitted_total",
        stats.stages["verify"].emitted == total_records,
        f"stats {stats.stages['verify'].emitted} vs shards {total_records}",
    )

    # --- rejection and quarantine logs ------------------------------------
    bad_log_lines = 0
    log_lines = 0
    rejected_logged = 0
    quarantined_logged = 0
    logs = root / "logs" / "verify"
    if logs.exists():
        for path in sorted(logs.glob("shard-*.jsonl")):
            for line in path.read_text().splitlines():
                log_lines += 1
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    bad_log_lines += 1
                    continue
                if "qa_id" not in entry or "reason" not in entry:
                    bad_log_lines += 1
                elif ".rejections." in path.name:
                    rejected_logged += 1
                else:
                    quarantined_logged += 1
    check("verify_logs_parse", bad_log_lines == 0, f"{log_lines} line(s)")
    check(
        "verify_logs_match_stats",
        rejected_logged == stats.stages["verify"].rejected
        and quarantined_logged == stats.stages["verify"].quarantined,
        f"rejected {rejected_logged}/{stats.stages['verify'].rejected}, "
        f"quarantined {quarantined_logged}/{stats.stages['verify'].quarantined}",
    )

    # --- checkpoints -----------------------------------------------------
    expected_hash = content_hash(snapshot_text, registry_text)
    cp_total = 0
    cp_bad_hash = 0
    cp_incomplete = 0
    cp_dir = root / "checkpoints"
    if cp_dir.exists():
        for path in sorted(cp_dir.glob("*/shard-*.json")):
            cp_total += 1
            try:
                cp = Checkpoint.from_dict(json.loads(path.read_text()))
            except (json.JSONDecodeError, KeyError, ValueError):
                cp_bad_hash += 1
                continue
            if cp.content_hash != expected_hash:
                cp_bad_hash += 1
            if not cp.complete:
                cp_incomplete += 1
    check(
        "checkpoints_consistent",
        cp_total > 0 and cp_bad_hash == 0,
        f"{cp_total} checkpoint(s) match config+registry fingerprint"
        if cp_bad_hash == 0 and cp_total
        else f"{cp_bad_hash} of {cp_total} mismatched",
    )
    check(
        "checkpoints_complete",
        cp_incomplete == 0,
        "" if cp_incomplete == 0 else f"{cp_incomplete} shard(s) mid-flight",
    )
    return results
