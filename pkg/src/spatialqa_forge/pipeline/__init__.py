"""Sharded four-stage run orchestration: filter, extract, generate, verify."""

from .checkpoint import Checkpoint, CheckpointMismatchError, load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    PipelineConfig,
    ProvidersConfig,
    RebalanceConfig,
    SourceConfig,
    VerifyConfig,
    content_hash,
    load_config,
)
from .fixtures import load_fixture_provider, write_fixture_corpus
from .runner import (
    STAGE_ORDER,
    SimulatedCrash,
    build_provider,
    materialize_scene_shards,
    run,
)
from .audit import audit_run
from .sharding import DuplicateImageError, shard_inputs, shard_of
from .stats import RunStats, StageStats, StatsError, render_stats_text

__all__ = [
    "Checkpoint",
    "CheckpointMismatchError",
    "ConfigError",
    "DuplicateImageError",
    "PipelineConfig",
    "ProvidersConfig",
    "RebalanceConfig",
    "RunStats",
    "STAGE_ORDER",
    "SimulatedCrash",
    "SourceConfig",
    "StageStats",
    "StatsError",
    "VerifyConfig",
    "audit_run",
    "build_provider",
    "content_hash",
    "load_checkpoint",
    "load_config",
    "load_fixture_provider",
    "materialize_scene_shards",
    "render_stats_text",
    "run",
    "save_checkpoint",
    "shard_inputs",
    "shard_of",
    "write_fixture_corpus",
]
