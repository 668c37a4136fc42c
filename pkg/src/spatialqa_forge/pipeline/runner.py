"""Four-stage sharded run driver: filter, extract, generate, verify.

Stages materialize their outputs (filtered manifest, scene records, raw QA,
verified QA) so any subset can be rerun independently. Shards are the unit
of parallelism and of checkpointing; every output byte is a deterministic
function of (config, seed, templates, inputs, provider behavior).
"""

from __future__ import annotations

import json
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
from PIL import Image

from ..filters import assess_image_quality, filter_bbox, keep_decision, semantic_filter
from ..generate import generate_for_scene
from ..inspection import Reason, echo_judge, inspect, mark_verified, rejection_line
from ..model import (
    ImageRef,
    Provenance,
    QARecord,
    RecordError,
    SceneObject,
    SceneRecord,
    parse_qa_record,
    parse_scene_record,
    serialize_qa_record,
    serialize_scene_record,
)
from ..providers.base import (
    DepthArtifactError,
    ExhaustedRetriesError,
    ProviderError,
    load_depth_artifact,
)
from ..providers.gateway import ExpertGateway
from ..providers.http import HttpProvider
from ..providers.replay import ReplayProvider
from ..templates import TemplateRegistry, default_registry, load_registry
from .checkpoint import (
    Checkpoint,
    CheckpointMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from .config import ConfigError, PipelineConfig
from .config import content_hash as _content_hash
from .fixtures import load_fixture_provider
from .sharding import shard_inputs
from .stats import RunStats, ShardStats
from .stats import STAGES as STAGE_ORDER

STAGE_OUT_DIR = {
    "ingest": "filtered",
    "extract": "scenes",
    "generate": "raw_qa",
    "verify": "qa",
}
STAGE_INPUT_DIR = {
    "ingest": "inputs",
    "extract": "filtered",
    "generate": "scenes",
    "verify": "raw_qa",
}


class SimulatedCrash(RuntimeError):
    """Raised by fault hooks to model an abrupt worker death."""


class RunPaths:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.snapshot = self.root / "config.snapshot.json"
        self.registry_snapshot = self.root / "templates.snapshot.yaml"
        self.stats_json = self.root / "stats.json"
        self.stats_txt = self.root / "stats.txt"
        self.checkpoints = self.root / "checkpoints"
        self.logs = self.root / "logs"
        self.samples = self.root / "samples"

    def dir_named(self, name: str) -> Path:
        return self.root / name

    @staticmethod
    def shard_name(shard_id: int) -> str:
        return f"shard-{shard_id:04d}.jsonl"

    def stage_input(self, stage: str, shard_id: int) -> Path:
        return self.dir_named(STAGE_INPUT_DIR[stage]) / self.shard_name(shard_id)

    def stage_out(self, stage: str, shard_id: int) -> Path:
        return self.dir_named(STAGE_OUT_DIR[stage]) / self.shard_name(shard_id)

    def stage_streams(self, stage: str, shard_id: int) -> dict[str, Path]:
        drops_name = "rejections" if stage == "verify" else "drops"
        base = f"shard-{shard_id:04d}"
        return {
            "out": self.stage_out(stage, shard_id),
            "drops": self.logs / stage / f"{base}.{drops_name}.jsonl",
            "quarantine": self.logs / stage / f"{base}.quarantine.jsonl",
        }


class ShardWriter:
    """All output streams of one (stage, shard); byte offsets are the
    commit currency, so a truncate returns exactly to the committed state."""

    def __init__(self, streams: dict[str, Path], offsets: dict[str, int] | None):
        self._files: dict[str, object] = {}
        self._pending: dict[str, list[bytes]] = {}
        self.offsets: dict[str, int] = {}
        for name, path in streams.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            start = 0 if offsets is None else int(offsets.get(name, 0))
            fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)
            f = os.fdopen(fd, "r+b")
            size = os.fstat(fd).st_size
            if size < start:
                f.close()
                raise CheckpointMismatchError(
                    f"{path} holds {size} bytes but the checkpoint committed {start}"
                )
            f.truncate(start)
            f.seek(start)
            self._files[name] = f
            self._pending[name] = []
            self.offsets[name] = start

    def line(self, name: str, text: str) -> None:
        # held in memory until commit; either way bytes past the committed
        # offset are discarded on resume, so durability is unchanged
        data = text.encode("utf-8") + b"\n"
        self._pending[name].append(data)
        self.offsets[name] += len(data)

    def commit(self) -> None:
        for name, f in self._files.items():
            pending = self._pending[name]
            if pending:
                f.writelines(pending)
                pending.clear()
            f.flush()
            os.fsync(f.fileno())

    def close(self) -> None:
        for f in self._files.values():
            f.close()


class RunContext:
    def __init__(
        self,
        cfg: PipelineConfig,
        paths: RunPaths,
        registry: TemplateRegistry,
        gateway: ExpertGateway,
        judge_fn: Callable[[QARecord], str],
        content_hash: str,
        resume: bool,
        fault_hook: Callable[[dict], None] | None,
    ):
        self.cfg = cfg
        self.paths = paths
        self.registry = registry
        self.gateway = gateway
        self.judge_fn = judge_fn
        self.content_hash = content_hash
        self.resume = resume
        self.fault_hook = fault_hook
        self.source_bases = cfg.source_bases()
        self.policy = cfg.sampling_policy()
        self.person_categories = frozenset(cfg.extract.person_categories)
        self.overrepresented = frozenset(cfg.rebalance.overrepresented)
        self.anchor_set = None
        self.anchor_embeddings: dict[str, np.ndarray] | None = None
        if cfg.anchors is not None:
            self.anchor_set = cfg.anchors.anchor_set()
            self.anchor_embeddings = _load_anchor_embeddings(cfg)

    def fire(self, phase: str, stage: str, shard: int, index: int) -> None:
        if self.fault_hook is not None:
            self.fault_hook(
                {"phase": phase, "stage": stage, "shard": shard, "index": index}
            )

    def base_for(self, ref: ImageRef) -> Path:
        try:
            return self.source_bases[ref.source_dataset]
        except KeyError:
            raise ConfigError(
                f"record references unconfigured source {ref.source_dataset!r}"
            ) from None


def _load_anchor_embeddings(cfg: PipelineConfig) -> dict[str, np.ndarray]:
    anchors = cfg.anchors
    try:
        archive = np.load(anchors.sidecar)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read anchor sidecar {anchors.sidecar}: {exc}") from exc
    table = {label: np.asarray(archive[label], dtype=np.float64) for label in archive.files}
    missing = [
        label
        for label in (*anchors.positive, *anchors.negative)
        if label not in table
    ]
    if missing:
        raise ConfigError(f"anchor sidecar lacks embeddings for: {', '.join(missing)}")
    return table


def _resolve(base: Path, uri: str) -> Path:
    if uri.startswith("file://"):
        return Path(uri[len("file://"):])
    p = Path(uri)
    return p if p.is_absolute() else base / p


def _image_from_dict(d: dict) -> ImageRef:
    try:
        return ImageRef(
            source_dataset=str(d["source_dataset"]),
            image_id=str(d["image_id"]),
            uri=str(d["uri"]),
            width=int(d["width"]),
            height=int(d["height"]),
            depth_uri=None if d.get("depth_uri") is None else str(d["depth_uri"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(f"bad image entry: {exc}") from exc


def _iter_lines(path: Path) -> Iterator[str]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            yield line.rstrip("\n")


def _event_line(stage: str, reason: str, ref: ImageRef | None, detail: str = "") -> str:
    payload = {
        "stage": stage,
        "reason": reason,
        "source": None if ref is None else ref.source_dataset,
        "image_id": None if ref is None else ref.image_id,
    }
    if detail:
        payload["detail"] = detail
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def build_provider(cfg: PipelineConfig):
    mode = cfg.providers.mode
    if mode == "oracle":
        return load_fixture_provider(cfg.providers.fixture_dir)
    if mode == "replay":
        return ReplayProvider(cfg.providers.replay_root)
    return HttpProvider(
        endpoints=cfg.providers.endpoint_map(),
        depth_convention=cfg.providers.depth_convention,
    )


def _judge_fn(cfg: PipelineConfig, gateway: ExpertGateway) -> Callable[[QARecord], str]:
    mode = cfg.verify.judge
    if mode == "auto":
        mode = "echo" if cfg.providers.mode == "oracle" else "gateway"
    if mode == "echo":
        return echo_judge
    return lambda record: gateway.judge_answer(record.image, record.question)


def _registry_and_text(cfg: PipelineConfig) -> tuple[TemplateRegistry, str]:
    if cfg.templates is not None:
        return load_registry(cfg.templates), Path(cfg.templates).read_text()
    text = (
        resources.files("spatialqa_forge")
        .joinpath("assets", "templates.yaml")
        .read_text()
    )
    return default_registry(), text


# --- stage processors ---------------------------------------------------
# Each classifies its input unit exactly once: emitted, rejected, or
# quarantined. Reasons with an "object_" prefix count sub-unit detail and
# deliberately stay out of the unit conservation arithmetic.

def _load_raster(path: Path) -> np.ndarray | None:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im)
    except (OSError, ValueError):
        return None


def _process_ingest(ctx: RunContext, line: str, writer: ShardWriter, stats: ShardStats):
    stage = "ingest"
    try:
        ref = _image_from_dict(json.loads(line))
    except (json.JSONDecodeError, RecordError) as exc:
        stats.count("rejected", "unparseable")
        writer.line("drops", _event_line(stage, "unparseable", None, str(exc)))
        return
    pixels = _load_raster(_resolve(ctx.base_for(ref), ref.uri))
    if pixels is None:
        stats.count("rejected", "undecodable")
        writer.line("drops", _event_line(stage, "undecodable", ref))
        return
    if pixels.shape[:2] != (ref.height, ref.width):
        stats.count("rejected", "dimension_mismatch")
        writer.line(
            "drops",
            _event_line(
                stage,
                "dimension_mismatch",
                ref,
                f"raster {pixels.shape[1]}x{pixels.shape[0]}",
            ),
        )
        return
    report = assess_image_quality(pixels, ctx.cfg.thresholds)
    if not report.keep:
        stats.count("rejected", report.drop_reason)
        writer.line("drops", _event_line(stage, report.drop_reason, ref))
        return
    if ctx.anchor_embeddings is not None:
        try:
            embedding = ctx.gateway.embed_image(ref)
        except ProviderError as exc:
            stats.count("quarantined", "provider_error")
            writer.line("quarantine", _event_line(stage, "provider_error", ref, str(exc)))
            return
        if not semantic_filter(embedding, ctx.anchor_embeddings, ctx.anchor_set):
            stats.count("rejected", "semantic")
            writer.line("drops", _event_line(stage, "semantic", ref))
            return
    writer.line("out", json.dumps(ref.to_dict(), sort_keys=True, ensure_ascii=False))
    stats.count("emitted")


def _process_extract(ctx: RunContext, line: str, writer: ShardWriter, stats: ShardStats):
    stage = "extract"
    try:
        ref = _image_from_dict(json.loads(line))
    except (json.JSONDecodeError, RecordError) as exc:
        stats.count("rejected", "unparseable")
        writer.line("drops", _event_line(stage, "unparseable", None, str(exc)))
        return
    try:
        caption = ctx.gateway.request_global_caption(ref)
        categories = list(dict.fromkeys(caption.objects))
        if not categories:
            stats.count("rejected", "no_categories")
            writer.line("drops", _event_line(stage, "no_categories", ref))
            return
        detections = ctx.gateway.detect_objects(ref, categories)
        objects: list[SceneObject] = []
        ordinal = 0
        for detection in detections:
            category = detection.query
            for box, _confidence in detection.boxes:
                object_id = ordinal
                ordinal += 1
                stats.categories[category] += 1
                reason = filter_bbox(box, ref)
                if reason is not None:
                    stats.stage.reasons[f"object_bbox_{reason}"] += 1
                    continue
                if category in ctx.overrepresented and not keep_decision(
                    ctx.cfg.seed,
                    ref.source_dataset,
                    ref.image_id,
                    object_id,
                    ctx.cfg.rebalance.keep_rate,
                ):
                    stats.stage.reasons["object_rebalanced_out"] += 1
                    continue
                region = ctx.gateway.request_region_caption(ref, box, category)
                is_person = category in ctx.person_categories
                facing = None
                if is_person:
                    facing = ctx.gateway.request_orientation(ref, box, category).facing
                objects.append(
                    SceneObject(
                        object_id=object_id,
                        category=category,
                        bbox=box,
                        region_caption=region.text,
                        is_person=is_person,
                        facing=facing,
                    )
                )
        if not objects:
            stats.count("rejected", "no_surviving_objects")
            writer.line("drops", _event_line(stage, "no_surviving_objects", ref))
            return
        record = SceneRecord(
            image=ref,
            global_caption=caption.caption,
            objects=tuple(objects),
            provenance=Provenance(
                filtered=True,
                captioned=True,
                grounded=True,
                depth_attached=ref.depth_uri is not None,
            ),
        )
    except ProviderError as exc:
        stats.count("quarantined", "provider_error")
        writer.line("quarantine", _event_line(stage, "provider_error", ref, str(exc)))
        return
    writer.line("out", serialize_scene_record(record))
    stats.count("emitted")


def _depth_for(ctx: RunContext, record: SceneRecord):
    image = record.image
    if image.depth_uri:
        path = _resolve(ctx.base_for(image), image.depth_uri)
        return load_depth_artifact(str(path), image)
    return ctx.gateway.fetch_depth_map(image)


def _process_generate(ctx: RunContext, line: str, writer: ShardWriter, stats: ShardStats):
    stage = "generate"
    try:
        record = parse_scene_record(line)
    except RecordError as exc:
        stats.count("rejected", "unparseable")
        writer.line("drops", _event_line(stage, "unparseable", None, str(exc)))
        return
    depth = None
    if record.image.depth_uri:
        try:
            depth = _depth_for(ctx, record)
        except DepthArtifactError as exc:
            stats.count("rejected", "depth_artifact")
            writer.line(
                "drops", _event_line(stage, "depth_artifact", record.image, str(exc))
            )
            return
    else:
        try:
            depth = _depth_for(ctx, record)
        except ExhaustedRetriesError as exc:
            stats.count("quarantined", "depth_unavailable")
            writer.line(
                "quarantine",
                _event_line(stage, "depth_unavailable", record.image, str(exc)),
            )
            return
        except ProviderError:
            # no depth source configured: depth-gated tasks simply skip
            stats.tallies["scenes_without_depth"] += 1
            depth = None
    result = generate_for_scene(
        record, policy=ctx.policy, registry=ctx.registry, depth=depth
    )
    for qa in result.records:
        writer.line("out", serialize_qa_record(qa, strict=False))
    stats.tallies.update(result.tally)
    stats.tallies["qa_generated"] += len(result.records)
    stats.count("emitted")


def _process_verify(ctx: RunContext, line: str, writer: ShardWriter, stats: ShardStats):
    stage = "verify"
    try:
        qa = parse_qa_record(line)
    except RecordError as exc:
        stats.count("rejected", "unparseable")
        writer.line("drops", _event_line(stage, "unparseable", None, str(exc)))
        return
    verdict = inspect(qa, ctx.judge_fn, ctx.cfg.verify.iou_threshold)
    if verdict.passed:
        writer.line("out", serialize_qa_record(mark_verified(qa)))
        stats.matrix[(qa.image.source_dataset, qa.task.value)] += 1
        stats.count("emitted")
    elif verdict.reason is Reason.JUDGE_UNAVAILABLE:
        writer.line("quarantine", rejection_line(verdict))
        stats.count("quarantined", verdict.reason.value)
    else:
        writer.line("drops", rejection_line(verdict))
        stats.count("rejected", verdict.reason.value)


_PROCESSORS = {
    "ingest": _process_ingest,
    "extract": _process_extract,
    "generate": _process_generate,
    "verify": _process_verify,
}


# --- shard driver --------------------------------------------------------

def _commit(
    ctx: RunContext,
    writer: ShardWriter,
    stage: str,
    shard_id: int,
    index: int,
    stats: ShardStats,
    complete: bool,
) -> None:
    stats.stage.check(stage)
    writer.commit()
    save_checkpoint(
        ctx.paths.checkpoints,
        Checkpoint(
            shard_id=shard_id,
            stage=stage,
            input_index=index,
            complete=complete,
            content_hash=ctx.content_hash,
            output_offsets=dict(writer.offsets),
            stats=stats.to_dict(),
        ),
    )


def _drive_shard(ctx: RunContext, stage: str, shard_id: int) -> ShardStats:
    cp = None
    if ctx.resume:
        cp = load_checkpoint(ctx.paths.checkpoints, stage, shard_id)
        if cp is not None and cp.content_hash != ctx.content_hash:
            raise CheckpointMismatchError(
                f"{stage} shard {shard_id}: checkpoint belongs to a different "
                "config or template registry; refusing to resume"
            )
    if cp is not None:
        stats = ShardStats.from_dict(cp.stats)
        start = cp.input_index
        offsets: dict[str, int] | None = cp.output_offsets
        if cp.complete:
            return stats
    else:
        stats = ShardStats()
        start = 0
        offsets = None

    process = partial(_PROCESSORS[stage], ctx)
    writer = ShardWriter(ctx.paths.stage_streams(stage, shard_id), offsets)
    hooked = ctx.fault_hook is not None
    try:
        seen = 0
        pending = 0
        for line in _iter_lines(ctx.paths.stage_input(stage, shard_id)):
            seen += 1
            if seen <= start:
                continue
            process(line, writer, stats)
            pending += 1
            if hooked:
                ctx.fire("record", stage, shard_id, seen)
            if pending >= ctx.cfg.commit_interval:
                _commit(ctx, writer, stage, shard_id, seen, stats, complete=False)
                pending = 0
                ctx.fire("commit", stage, shard_id, seen)
        if seen < start:
            raise CheckpointMismatchError(
                f"{stage} shard {shard_id}: input holds {seen} lines but the "
                f"checkpoint committed {start}"
            )
        _commit(ctx, writer, stage, shard_id, seen, stats, complete=True)
        ctx.fire("commit", stage, shard_id, seen)
    finally:
        writer.close()
    return stats


# --- run entry points ----------------------------------------------------

def _materialize_inputs(ctx: RunContext) -> None:
    entries: list[ImageRef] = []
    for source in ctx.cfg.sources:
        if not source.manifest.exists():
            raise ConfigError(f"manifest not found: {source.manifest}")
        for line in _iter_lines(source.manifest):
            if not line.strip():
                continue
            try:
                ref = _image_from_dict(json.loads(line))
            except (json.JSONDecodeError, RecordError) as exc:
                raise ConfigError(
                    f"bad manifest line in {source.manifest}: {exc}"
                ) from exc
            if ref.source_dataset != source.name:
                raise ConfigError(
                    f"manifest {source.manifest} lists source "
                    f"{ref.source_dataset!r} under configured source {source.name!r}"
                )
            entries.append(ref)
    shards = shard_inputs(entries, ctx.cfg.shard_count)
    inputs_dir = ctx.paths.dir_named("inputs")
    inputs_dir.mkdir(parents=True, exist_ok=True)
    for shard_id, bucket in enumerate(shards):
        path = inputs_dir / RunPaths.shard_name(shard_id)
        tmp = path.with_suffix(".jsonl.tmp")
        body = "".join(
            json.dumps(ref.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
            for ref in bucket
        )
        tmp.write_text(body, encoding="utf-8")
        os.replace(tmp, path)


def materialize_scene_shards(
    cfg: PipelineConfig, records: Iterable[SceneRecord]
) -> None:
    """Seed a run directory's scenes/ shards directly, for runs that start
    at the generate stage with scene records produced elsewhere."""
    paths = RunPaths(cfg.run_dir)
    by_identity: dict[tuple[str, str], SceneRecord] = {}
    refs = []
    for record in records:
        key = (record.image.source_dataset, record.image.image_id)
        by_identity[key] = record
        refs.append(record.image)
    shards = shard_inputs(refs, cfg.shard_count)
    scenes_dir = paths.dir_named("scenes")
    scenes_dir.mkdir(parents=True, exist_ok=True)
    for shard_id, bucket in enumerate(shards):
        path = scenes_dir / RunPaths.shard_name(shard_id)
        body = "".join(
            serialize_scene_record(
                by_identity[(ref.source_dataset, ref.image_id)]
            )
            + "\n"
            for ref in bucket
        )
        path.write_text(body, encoding="utf-8")


def _wipe_stage(paths: RunPaths, stage: str) -> None:
    for d in (
        paths.dir_named(STAGE_OUT_DIR[stage]),
        paths.logs / stage,
        paths.checkpoints / stage,
    ):
        shutil.rmtree(d, ignore_errors=True)


def _require_stage_inputs(paths: RunPaths, stage: str, shard_count: int) -> None:
    missing = [
        str(paths.stage_input(stage, k))
        for k in range(shard_count)
        if not paths.stage_input(stage, k).exists()
    ]
    if missing:
        raise ConfigError(
            f"stage {stage!r} has no input shards (run the preceding stage "
            f"first); missing: {missing[0]}"
        )


def run(
    cfg: PipelineConfig,
    *,
    stages: tuple[str, ...] | None = None,
    resume: bool = False,
    fault_hook: Callable[[dict], None] | None = None,
    provider=None,
) -> RunStats:
    """Execute the requested stages over the configured corpus.

    Without `resume`, the executed stages' outputs are rebuilt from
    scratch; with it, each shard continues from its last durable
    checkpoint, refusing if the run directory was produced by a different
    config or template registry.
    """
    requested = tuple(s for s in STAGE_ORDER if s in (stages or cfg.stages))
    if not requested:
        raise ConfigError("no stages requested")
    paths = RunPaths(cfg.run_dir)
    paths.root.mkdir(parents=True, exist_ok=True)

    registry, registry_text = _registry_and_text(cfg)
    snapshot = cfg.snapshot_text()
    fingerprint = _content_hash(snapshot, registry_text)

    if paths.snapshot.exists():
        stale = paths.snapshot.read_text() != snapshot or (
            paths.registry_snapshot.exists()
            and paths.registry_snapshot.read_text() != registry_text
        )
        if stale and (resume or set(requested) != set(STAGE_ORDER)):
            raise CheckpointMismatchError(
                "run directory was produced with a different configuration "
                "or template registry; use a fresh directory or matching config"
            )
    if not resume:
        for stage in requested:
            _wipe_stage(paths, stage)
        if "ingest" in requested:
            shutil.rmtree(paths.dir_named("inputs"), ignore_errors=True)
    paths.snapshot.write_text(snapshot)
    paths.registry_snapshot.write_text(registry_text)

    provider = provider if provider is not None else build_provider(cfg)
    gateway = ExpertGateway(provider, endpoints=cfg.providers.endpoint_map() or None)
    ctx = RunContext(
        cfg=cfg,
        paths=paths,
        registry=registry,
        gateway=gateway,
        judge_fn=_judge_fn(cfg, gateway),
        content_hash=fingerprint,
        resume=resume,
        fault_hook=fault_hook,
    )

    if "ingest" in requested:
        _materialize_inputs(ctx)

    current = RunStats()
    for stage in requested:
        _require_stage_inputs(paths, stage, cfg.shard_count)
        started = time.perf_counter()
        drive = partial(_drive_shard, ctx, stage)
        if cfg.worker_count == 1:
            shard_results = [drive(k) for k in range(cfg.shard_count)]
        else:
            with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
                shard_results = list(pool.map(drive, range(cfg.shard_count)))
        for shard_stats in shard_results:
            current.merge_shard(stage, shard_stats)
        current.stages[stage].wall_seconds = time.perf_counter() - started
        current.stages[stage].check(stage)

    final = RunStats()
    if paths.stats_json.exists():
        try:
            final = RunStats.from_dict(json.loads(paths.stats_json.read_text()))
        except (json.JSONDecodeError, ValueError):
            final = RunStats()
    for stage in requested:
        final.stages[stage] = current.stages[stage]
    if "extract" in requested:
        final.categories = current.categories
    if "generate" in requested:
        final.tallies = current.tallies
    if "verify" in requested:
        final.matrix = current.matrix
    final.check()
    from .stats import render_stats_text

    paths.stats_json.write_text(final.to_json() + "\n")
    paths.stats_txt.write_text(render_stats_text(final))
    return final
