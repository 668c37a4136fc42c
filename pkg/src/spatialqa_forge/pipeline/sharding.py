"""Stable shard assignment for (source, image) work items.

Placement depends only on identity, never on input order, so permuting a
manifest or resharding a resumed run can never move a record.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

from ..model import ImageRef


class DuplicateImageError(ValueError):
    """Two manifest entries share the same (source, image_id) identity."""


def shard_of(source_dataset: str, image_id: str, shard_count: int) -> int:
    if shard_count < 1:
        raise ValueError(f"shard_count must be >= 1, got {shard_count}")
    key = f"{source_dataset}|{image_id}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") % shard_count


def shard_inputs(
    entries: Iterable[ImageRef], shard_count: int
) -> list[list[ImageRef]]:
    """Bucket entries by identity hash; each bucket sorted by identity."""
    shards: list[list[ImageRef]] = [[] for _ in range(shard_count)]
    seen: set[tuple[str, str]] = set()
    for ref in entries:
        key = (ref.source_dataset, ref.image_id)
        if key in seen:
            raise DuplicateImageError(
                f"duplicate input {ref.source_dataset}/{ref.image_id}"
            )
        seen.add(key)
        shards[shard_of(ref.source_dataset, ref.image_id, shard_count)].append(ref)
    for bucket in shards:
        bucket.sort(key=lambda r: (r.source_dataset, r.image_id))
    return shards
