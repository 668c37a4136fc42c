"""Durable per-shard progress markers with atomic replacement.

A checkpoint records how many input units of one (stage, shard) are fully
committed and the byte length of every output stream at that moment.
Resume truncates each stream back to its committed length, so uncommitted
trailing writes from a crash are discarded rather than replayed twice.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class CheckpointMismatchError(RuntimeError):
    """Resume refused: the on-disk run does not match this configuration."""


@dataclass
class Checkpoint:
    shard_id: int
    stage: str
    input_index: int  # input units fully committed
    complete: bool
    content_hash: str
    output_offsets: dict[str, int] = field(default_factory=dict)  # stream -> bytes
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "shard_id": self.shard_id,
            "stage": self.stage,
            "input_index": self.input_index,
            "complete": self.complete,
            "content_hash": self.content_hash,
            "output_offsets": dict(sorted(self.output_offsets.items())),
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        return cls(
            shard_id=int(d["shard_id"]),
            stage=str(d["stage"]),
            input_index=int(d["input_index"]),
            complete=bool(d["complete"]),
            content_hash=str(d["content_hash"]),
            output_offsets={str(k): int(v) for k, v in d["output_offsets"].items()},
            stats=dict(d.get("stats", {})),
        )


def checkpoint_path(checkpoints_dir: Path, stage: str, shard_id: int) -> Path:
    return checkpoints_dir / stage / f"shard-{shard_id:04d}.json"


def save_checkpoint(checkpoints_dir: Path, cp: Checkpoint) -> None:
    """Write-to-temp then rename, so readers only ever see whole files."""
    path = checkpoint_path(checkpoints_dir, cp.stage, cp.shard_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    payload = json.dumps(cp.to_dict(), sort_keys=True).encode()
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o644)
    try:
        os.write(fd, payload)
        os.fsync(fd)
    finally:
        os.close(fd)
    os.replace(tmp, path)


def load_checkpoint(
    checkpoints_dir: Path, stage: str, shard_id: int
) -> Checkpoint | None:
    path = checkpoint_path(checkpoints_dir, stage, shard_id)
    if not path.exists():
        return None
    try:
        return Checkpoint.from_dict(json.loads(path.read_text()))
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointMismatchError(f"unreadable checkpoint {path}: {exc}") from exc
