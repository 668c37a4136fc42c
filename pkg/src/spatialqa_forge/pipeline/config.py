"""Run configuration: strict YAML parsing, canonical snapshot, content hash.

Unknown keys are refused rather than ignored — a silently dropped typo in
a threshold or seed would change outputs without anyone noticing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..filters import DEFAULT_OVERREPRESENTED, QualityThresholds, SemanticAnchorSet
from ..generate import DEFAULT_TASK_CAPS, SamplingPolicy
from ..geometry import QualityClass
from ..model import DepthConvention, TaskKind
from ..providers.base import ProviderEndpoint, ProviderKind, RetryPolicy
from .stats import STAGES

PROVIDER_MODES = ("oracle", "replay", "http")

DEFAULT_PERSON_CATEGORIES = (
    "person",
    "man",
    "woman",
    "boy",
    "girl",
    "child",
    "pedestrian",
)


class ConfigError(ValueError):
    """The configuration file is malformed or inconsistent."""


def _section(raw: object, name: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(raw)


def _no_leftovers(d: dict, name: str) -> None:
    if d:
        keys = ", ".join(sorted(map(str, d)))
        raise ConfigError(f"unknown key(s) in {name!r}: {keys}")


@dataclass(frozen=True)
class SourceConfig:
    name: str
    manifest: Path

    @property
    def base_dir(self) -> Path:
        return self.manifest.parent


@dataclass(frozen=True)
class AnchorsConfig:
    positive: tuple[str, ...]
    negative: tuple[str, ...]
    margin: float
    sidecar: Path  # .npz holding one embedding array per anchor label

    def anchor_set(self) -> SemanticAnchorSet:
        return SemanticAnchorSet(self.positive, self.negative, self.margin)


@dataclass(frozen=True)
class RebalanceConfig:
    keep_rate: float = 0.10
    overrepresented: tuple[str, ...] = DEFAULT_OVERREPRESENTED

    def __post_init__(self):
        if not 0.0 < self.keep_rate <= 1.0:
            raise ConfigError(f"keep_rate must be in (0, 1], got {self.keep_rate}")


@dataclass(frozen=True)
class ExtractConfig:
    person_categories: tuple[str, ...] = DEFAULT_PERSON_CATEGORIES


@dataclass(frozen=True)
class VerifyConfig:
    iou_threshold: float = 0.8
    judge: str = "auto"  # auto: echo for fixture modes, gateway otherwise

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError("iou_threshold must be in (0, 1]")
        if self.judge not in ("auto", "echo", "gateway"):
            raise ConfigError(f"judge must be auto|echo|gateway, got {self.judge!r}")


@dataclass(frozen=True)
class ProvidersConfig:
    mode: str
    fixture_dir: Path | None = None
    replay_root: Path | None = None
    endpoints: tuple[ProviderEndpoint, ...] = ()
    depth_convention: DepthConvention | None = None

    def __post_init__(self):
        if self.mode not in PROVIDER_MODES:
            raise ConfigError(
                f"providers.mode must be one of {PROVIDER_MODES}, got {self.mode!r}"
            )
        if self.mode == "oracle" and self.fixture_dir is None:
            raise ConfigError("providers.mode oracle requires fixture_dir")
        if self.mode == "replay" and self.replay_root is None:
            raise ConfigError("providers.mode replay requires replay_root")

    def endpoint_map(self) -> dict[ProviderKind, ProviderEndpoint]:
        return {ep.kind: ep for ep in self.endpoints}


@dataclass(frozen=True)
class PipelineConfig:
    run_dir: Path
    sources: tuple[SourceConfig, ...]
    providers: ProvidersConfig
    seed: int = 0
    shard_count: int = 1
    worker_count: int = 1
    commit_interval: int = 64
    stages: tuple[str, ...] = STAGES
    templates: Path | None = None
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)
    anchors: AnchorsConfig | None = None
    rebalance: RebalanceConfig = field(default_factory=RebalanceConfig)
    task_caps: dict = field(default_factory=lambda: dict(DEFAULT_TASK_CAPS))
    min_depth_quality: frozenset = frozenset(
        {QualityClass.A, QualityClass.B, QualityClass.C}
    )
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def __post_init__(self):
        if self.shard_count < 1:
            raise ConfigError("shard_count must be >= 1")
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        if self.commit_interval < 1:
            raise ConfigError("commit_interval must be >= 1")
        if not self.sources:
            raise ConfigError("at least one source is required")
        names = [s.name for s in self.sources]
        if len(set(names)) != len(names):
            raise ConfigError("source names must be unique")
        if not self.stages:
            raise ConfigError("stages must be non-empty")
        for stage in self.stages:
            if stage not in STAGES:
                raise ConfigError(f"unknown stage {stage!r}")
        ordered = tuple(s for s in STAGES if s in self.stages)
        if ordered != self.stages:
            raise ConfigError(f"stages must follow the order {STAGES}")

    def sampling_policy(self) -> SamplingPolicy:
        return SamplingPolicy(
            max_pairs_per_image_per_task=dict(self.task_caps),
            seed=self.seed,
            min_depth_quality=self.min_depth_quality,
        )

    def source_bases(self) -> dict[str, Path]:
        return {s.name: s.base_dir for s in self.sources}

    def to_dict(self) -> dict:
        """Canonical JSON-safe form; this is what gets hashed and snapshotted."""
        return {
            "run_dir": str(self.run_dir),
            "seed": self.seed,
            "shard_count": self.shard_count,
            "worker_count": self.worker_count,
            "commit_interval": self.commit_interval,
            "stages": list(self.stages),
            "templates": None if self.templates is None else str(self.templates),
            "sources": [
                {"name": s.name, "manifest": str(s.manifest)} for s in self.sources
            ],
            "providers": {
                "mode": self.providers.mode,
                "fixture_dir": (
                    None
                    if self.providers.fixture_dir is None
                    else str(self.providers.fixture_dir)
                ),
                "replay_root": (
                    None
                    if self.providers.replay_root is None
                    else str(self.providers.replay_root)
                ),
                "depth_convention": (
                    None
                    if self.providers.depth_convention is None
                    else self.providers.depth_convention.value
                ),
                "endpoints": [
                    {
                        "kind": ep.kind.value,
                        "base_url": ep.base_url,
                        "auth_env_var": ep.auth_env_var,
                        "max_in_flight": ep.max_in_flight,
                        "retry": {
                            "max_attempts": ep.retry.max_attempts,
                            "backoff_base": ep.retry.backoff_base,
                            "backoff_cap": ep.retry.backoff_cap,
                        },
                    }
                    for ep in sorted(self.providers.endpoints, key=lambda e: e.kind.value)
                ],
            },
            "filters": {
                "sharpness_min": self.thresholds.sharpness_min,
                "exposure_lo": self.thresholds.exposure_lo,
                "exposure_hi": self.thresholds.exposure_hi,
                "min_side": self.thresholds.min_side,
                "anchors": (
                    None
                    if self.anchors is None
                    else {
                        "positive": list(self.anchors.positive),
                        "negative": list(self.anchors.negative),
                        "margin": self.anchors.margin,
                        "sidecar": str(self.anchors.sidecar),
                    }
                ),
            },
            "rebalance": {
                "keep_rate": self.rebalance.keep_rate,
                "overrepresented": list(self.rebalance.overrepresented),
            },
            "sampling": {
                "max_pairs_per_image_per_task": {
                    task.value: cap for task, cap in sorted(
                        self.task_caps.items(), key=lambda kv: kv[0].value
                    )
                },
                "min_depth_quality": sorted(q.value for q in self.min_depth_quality),
            },
            "extract": {"person_categories": list(self.extract.person_categories)},
            "verify": {
                "iou_threshold": self.verify.iou_threshold,
                "judge": self.verify.judge,
            },
        }

    def snapshot_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def content_hash(snapshot_text: str, registry_text: str) -> str:
    """Fingerprint of everything that shapes output bytes besides inputs."""
    h = hashlib.blake2b(digest_size=16)
    h.update(snapshot_text.encode())
    h.update(b"\x00")
    h.update(registry_text.encode())
    return h.hexdigest()


def _path(raw: object, base: Path, what: str) -> Path:
    if not isinstance(raw, str) or not raw:
        raise ConfigError(f"{what} must be a non-empty path string")
    p = Path(raw)
    return p if p.is_absolute() else (base / p).resolve()


def _parse_endpoint(raw: dict, index: int) -> ProviderEndpoint:
    d = _section(raw, f"providers.endpoints[{index}]")
    kind_raw = d.pop("kind", None)
    try:
        kind = ProviderKind(kind_raw)
    except ValueError:
        valid = ", ".join(k.value for k in ProviderKind)
        raise ConfigError(
            f"providers.endpoints[{index}].kind must be one of {valid}"
        ) from None
    retry_raw = _section(d.pop("retry", None), "retry")
    retry = RetryPolicy(
        max_attempts=int(retry_raw.pop("max_attempts", 3)),
        backoff_base=float(retry_raw.pop("backoff_base", 0.5)),
        backoff_cap=float(retry_raw.pop("backoff_cap", 8.0)),
    )
    _no_leftovers(retry_raw, f"providers.endpoints[{index}].retry")
    ep = ProviderEndpoint(
        kind=kind,
        base_url=str(d.pop("base_url", "")),
        auth_env_var=str(d.pop("auth_env_var", "")),
        max_in_flight=int(d.pop("max_in_flight", 4)),
        retry=retry,
    )
    _no_leftovers(d, f"providers.endpoints[{index}]")
    return ep


def _parse_task_caps(raw: object) -> dict:
    if raw is None:
        return dict(DEFAULT_TASK_CAPS)
    if isinstance(raw, int):
        return {task: raw for task in TaskKind}
    caps = dict(DEFAULT_TASK_CAPS)
    for key, value in _section(raw, "sampling.max_pairs_per_image_per_task").items():
        try:
            task = TaskKind(key)
        except ValueError:
            valid = ", ".join(t.value for t in TaskKind)
            raise ConfigError(f"unknown task {key!r}; tasks are {valid}") from None
        if not isinstance(value, int) or value < 0:
            raise ConfigError(f"cap for {key} must be a non-negative integer")
        caps[task] = value
    return caps


def load_config(path: str | Path) -> PipelineConfig:
    """Parse the YAML run configuration at `path`.

    Relative paths inside the file resolve against the file's directory.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    top = _section(raw, "config")
    base = path.resolve().parent

    run_dir = _path(top.pop("run_dir", None), base, "run_dir")

    sources_raw = top.pop("sources", None)
    if not isinstance(sources_raw, list) or not sources_raw:
        raise ConfigError("sources must be a non-empty list")
    sources = []
    for i, entry in enumerate(sources_raw):
        d = _section(entry, f"sources[{i}]")
        name = d.pop("name", None)
        if not isinstance(name, str) or not name:
            raise ConfigError(f"sources[{i}].name must be a non-empty string")
        manifest = _path(d.pop("manifest", None), base, f"sources[{i}].manifest")
        _no_leftovers(d, f"sources[{i}]")
        sources.append(SourceConfig(name=name, manifest=manifest))

    prov_raw = _section(top.pop("providers", None), "providers")
    mode = prov_raw.pop("mode", None)
    if not isinstance(mode, str):
        raise ConfigError("providers.mode is required")
    fixture_dir = prov_raw.pop("fixture_dir", None)
    replay_root = prov_raw.pop("replay_root", None)
    convention_raw = prov_raw.pop("depth_convention", None)
    convention = None
    if convention_raw is not None:
        try:
            convention = DepthConvention(convention_raw)
        except ValueError:
            valid = ", ".join(c.value for c in DepthConvention)
            raise ConfigError(f"depth_convention must be one of {valid}") from None
    endpoints_raw = prov_raw.pop("endpoints", []) or []
    if not isinstance(endpoints_raw, list):
        raise ConfigError("providers.endpoints must be a list")
    endpoints = tuple(_parse_endpoint(e, i) for i, e in enumerate(endpoints_raw))
    _no_leftovers(prov_raw, "providers")
    providers = ProvidersConfig(
        mode=mode,
        fixture_dir=(
            None if fixture_dir is None else _path(fixture_dir, base, "fixture_dir")
        ),
        replay_root=(
            None if replay_root is None else _path(replay_root, base, "replay_root")
        ),
        endpoints=endpoints,
        depth_convention=convention,
    )

    filt_raw = _section(top.pop("filters", None), "filters")
    anchors_raw = filt_raw.pop("anchors", None)
    anchors = None
    if anchors_raw is not None:
        d = _section(anchors_raw, "filters.anchors")
        anchors = AnchorsConfig(
            positive=tuple(d.pop("positive", []) or []),
            negative=tuple(d.pop("negative", []) or []),
            margin=float(d.pop("margin", 0.0)),
            sidecar=_path(d.pop("sidecar", None), base, "filters.anchors.sidecar"),
        )
        _no_leftovers(d, "filters.anchors")
        if not anchors.positive or not anchors.negative:
            raise ConfigError("anchors need both positive and negative labels")
    thresholds = QualityThresholds(
        sharpness_min=float(filt_raw.pop("sharpness_min", 0.0005)),
        exposure_lo=float(filt_raw.pop("exposure_lo", 0.02)),
        exposure_hi=float(filt_raw.pop("exposure_hi", 0.98)),
        min_side=int(filt_raw.pop("min_side", 64)),
    )
    _no_leftovers(filt_raw, "filters")

    reb_raw = _section(top.pop("rebalance", None), "rebalance")
    rebalance = RebalanceConfig(
        keep_rate=float(reb_raw.pop("keep_rate", 0.10)),
        overrepresented=tuple(
            reb_raw.pop("overrepresented", list(DEFAULT_OVERREPRESENTED)) or []
        ),
    )
    _no_leftovers(reb_raw, "rebalance")

    samp_raw = _section(top.pop("sampling", None), "sampling")
    task_caps = _parse_task_caps(samp_raw.pop("max_pairs_per_image_per_task", None))
    quality_raw = samp_raw.pop("min_depth_quality", None)
    if quality_raw is None:
        min_quality = frozenset({QualityClass.A, QualityClass.B, QualityClass.C})
    else:
        try:
            min_quality = frozenset(QualityClass(q) for q in quality_raw)
        except ValueError:
            raise ConfigError("min_depth_quality entries must be A, B, or C") from None
        if QualityClass.D in min_quality:
            raise ConfigError("class D depth pairs are never eligible")
    _no_leftovers(samp_raw, "sampling")

    ext_raw = _section(top.pop("extract", None), "extract")
    extract = ExtractConfig(
        person_categories=tuple(
            ext_raw.pop("person_categories", list(DEFAULT_PERSON_CATEGORIES)) or []
        )
    )
    _no_leftovers(ext_raw, "extract")

    ver_raw = _section(top.pop("verify", None), "verify")
    verify = VerifyConfig(
        iou_threshold=float(ver_raw.pop("iou_threshold", 0.8)),
        judge=str(ver_raw.pop("judge", "auto")),
    )
    _no_leftovers(ver_raw, "verify")

    templates_raw = top.pop("templates", None)
    stages_raw = top.pop("stages", None)
    stages = tuple(stages_raw) if stages_raw else STAGES

    cfg = PipelineConfig(
        run_dir=run_dir,
        sources=tuple(sources),
        providers=providers,
        seed=int(top.pop("seed", 0)),
        shard_count=int(top.pop("shard_count", 1)),
        worker_count=int(top.pop("worker_count", 1)),
        commit_interval=int(top.pop("commit_interval", 64)),
        stages=stages,
        templates=(
            None if templates_raw is None else _path(templates_raw, base, "templates")
        ),
        thresholds=thresholds,
        anchors=anchors,
        rebalance=rebalance,
        task_caps=task_caps,
        min_depth_quality=min_quality,
        extract=extract,
        verify=verify,
    )
    _no_leftovers(top, "config")
    return cfg
