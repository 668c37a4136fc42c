"""Run accounting: per-stage conservation and the source-by-task matrix."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from ..model import TaskKind

STAGES = ("ingest", "extract", "generate", "verify")
TASK_COLUMNS = tuple(t.value for t in TaskKind)


class StatsError(ValueError):
    """An accounting invariant was violated."""


@dataclass
class StageStats:
    attempted: int = 0
    emitted: int = 0
    rejected: int = 0
    quarantined: int = 0
    reasons: Counter = field(default_factory=Counter)
    wall_seconds: float = 0.0

    def check(self, stage: str) -> None:
        total = self.emitted + self.rejected + self.quarantined
        if self.attempted != total:
            raise StatsError(
                f"{stage}: attempted {self.attempted} != "
                f"emitted {self.emitted} + rejected {self.rejected} + "
                f"quarantined {self.quarantined}"
            )

    def merge(self, other: "StageStats") -> None:
        self.attempted += other.attempted
        self.emitted += other.emitted
        self.rejected += other.rejected
        self.quarantined += other.quarantined
        self.reasons.update(other.reasons)
        self.wall_seconds += other.wall_seconds

    def to_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "emitted": self.emitted,
            "rejected": self.rejected,
            "quarantined": self.quarantined,
            "reasons": dict(sorted(self.reasons.items())),
            "wall_seconds": self.wall_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageStats":
        return cls(
            attempted=int(d.get("attempted", 0)),
            emitted=int(d.get("emitted", 0)),
            rejected=int(d.get("rejected", 0)),
            quarantined=int(d.get("quarantined", 0)),
            reasons=Counter({str(k): int(v) for k, v in d.get("reasons", {}).items()}),
            wall_seconds=float(d.get("wall_seconds", 0.0)),
        )


@dataclass
class ShardStats:
    """One shard's contribution to one stage, snapshotted in checkpoints."""

    stage: StageStats = field(default_factory=StageStats)
    matrix: Counter = field(default_factory=Counter)  # (source, task_value) -> n
    tallies: Counter = field(default_factory=Counter)
    categories: Counter = field(default_factory=Counter)

    def count(self, outcome: str, reason: str | None = None) -> None:
        self.stage.attempted += 1
        if outcome == "emitted":
            self.stage.emitted += 1
        elif outcome == "rejected":
            self.stage.rejected += 1
        elif outcome == "quarantined":
            self.stage.quarantined += 1
        else:
            raise StatsError(f"unknown outcome {outcome!r}")
        if reason:
            self.stage.reasons[reason] += 1

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.to_dict(),
            "matrix": {f"{s}|{t}": n for (s, t), n in sorted(self.matrix.items())},
            "tallies": dict(sorted(self.tallies.items())),
            "categories": dict(sorted(self.categories.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShardStats":
        matrix: Counter = Counter()
        for key, n in d.get("matrix", {}).items():
            source, _, task = key.partition("|")
            matrix[(source, task)] = int(n)
        return cls(
            stage=StageStats.from_dict(d.get("stage", {})),
            matrix=matrix,
            tallies=Counter(
                {str(k): int(v) for k, v in d.get("tallies", {}).items()}
            ),
            categories=Counter(
                {str(k): int(v) for k, v in d.get("categories", {}).items()}
            ),
        )


@dataclass
class RunStats:
    stages: dict[str, StageStats] = field(
        default_factory=lambda: {name: StageStats() for name in STAGES}
    )
    matrix: Counter = field(default_factory=Counter)  # (source, task_value) -> n
    tallies: Counter = field(default_factory=Counter)
    categories: Counter = field(default_factory=Counter)

    def merge_shard(self, stage: str, shard: ShardStats) -> None:
        if stage not in self.stages:
            raise StatsError(f"unknown stage {stage!r}")
        self.stages[stage].merge(shard.stage)
        self.matrix.update(shard.matrix)
        self.tallies.update(shard.tallies)
        self.categories.update(shard.categories)

    def check(self) -> None:
        for name, stage in self.stages.items():
            stage.check(name)
        if sum(self.matrix.values()) != self.stages["verify"].emitted:
            raise StatsError(
                "source-by-task matrix total does not match verified emissions"
            )

    def sources(self) -> list[str]:
        return sorted({source for source, _ in self.matrix})

    def task_total(self, task_value: str) -> int:
        return sum(n for (_, t), n in self.matrix.items() if t == task_value)

    def source_total(self, source: str) -> int:
        return sum(n for (s, _), n in self.matrix.items() if s == source)

    def grand_total(self) -> int:
        return sum(self.matrix.values())

    def to_dict(self) -> dict:
        return {
            "stages": {name: s.to_dict() for name, s in self.stages.items()},
            "records_by_source_task": {
                source: {
                    task: self.matrix.get((source, task), 0)
                    for task in TASK_COLUMNS
                }
                for source in self.sources()
            },
            "totals": {
                "by_task": {t: self.task_total(t) for t in TASK_COLUMNS},
                "by_source": {s: self.source_total(s) for s in self.sources()},
                "grand": self.grand_total(),
            },
            "tallies": dict(sorted(self.tallies.items())),
            "categories": dict(sorted(self.categories.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunStats":
        stats = cls()
        for name, payload in d.get("stages", {}).items():
            stats.stages[name] = StageStats.from_dict(payload)
        for source, row in d.get("records_by_source_task", {}).items():
            for task, n in row.items():
                if int(n):
                    stats.matrix[(source, task)] = int(n)
        stats.tallies = Counter(
            {str(k): int(v) for k, v in d.get("tallies", {}).items()}
        )
        stats.categories = Counter(
            {str(k): int(v) for k, v in d.get("categories", {}).items()}
        )
        return stats

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def render_stats_text(stats: RunStats) -> str:
    """Verified-record table (one row per source, one column per task,
    plus totals both ways) followed by the per-stage ledger."""
    sources = stats.sources()
    header = ["source", *TASK_COLUMNS, "total"]
    rows = [header]
    for source in sources:
        rows.append(
            [source]
            + [str(stats.matrix.get((source, t), 0)) for t in TASK_COLUMNS]
            + [str(stats.source_total(source))]
        )
    rows.append(
        ["total"]
        + [str(stats.task_total(t)) for t in TASK_COLUMNS]
        + [str(stats.grand_total())]
    )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["verified records by source and task", ""]
    for row in rows:
        cells = [row[0].ljust(widths[0])] + [
            cell.rjust(widths[i]) for i, cell in enumerate(row) if i > 0
        ]
        lines.append("  ".join(cells).rstrip())
    lines += ["", "stage ledger", ""]
    stage_header = ["stage", "attempted", "emitted", "rejected", "quarantined", "seconds"]
    stage_rows = [stage_header]
    for name in STAGES:
        s = stats.stages[name]
        stage_rows.append(
            [
                name,
                str(s.attempted),
                str(s.emitted),
                str(s.rejected),
                str(s.quarantined),
                f"{s.wall_seconds:.2f}",
            ]
        )
    widths = [max(len(row[i]) for row in stage_rows) for i in range(len(stage_header))]
    for row in stage_rows:
        cells = [row[0].ljust(widths[0])] + [
            cell.rjust(widths[i]) for i, cell in enumerate(row) if i > 0
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
