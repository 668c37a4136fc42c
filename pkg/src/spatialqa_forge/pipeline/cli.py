"""`forge` command line: run, stats, verify, sample, oracle gen."""

from __future__ import annotations

import json
import random
import re
from pathlib import Path

import click

from ..geometry import denormalize_bbox
from ..model import NormalizedBBox, RecordError, parse_qa_record
from .audit import audit_run
from .checkpoint import CheckpointMismatchError
from .config import ConfigError, load_config
from .fixtures import write_fixture_corpus
from .runner import STAGE_ORDER, run
from .sharding import DuplicateImageError
from .stats import RunStats, render_stats_text

_BOX_IN_TEXT = re.compile(
    r"<box>\[(\d+),\s*(\d+),\s*(\d+),\s*(\d+)\]</box>"
)


@click.group()
def cli():
    """Turn images plus expert-model outputs into verified spatial QA data."""


@cli.command(name="run")
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="YAML run configuration.",
)
@click.option(
    "--stage",
    "stage_options",
    multiple=True,
    type=click.Choice(STAGE_ORDER),
    help="Run only these stages (repeatable); default is the config's list.",
)
@click.option("--resume", is_flag=True, help="Continue from durable checkpoints.")
def run_cmd(config_path: str, stage_options: tuple[str, ...], resume: bool):
    """Execute the pipeline stages defined in the configuration."""
    try:
        cfg = load_config(config_path)
        stats = run(cfg, stages=stage_options or None, resume=resume)
    except (ConfigError, CheckpointMismatchError, DuplicateImageError, RecordError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(render_stats_text(stats), nl=False)
    click.echo(f"\nrun directory: {cfg.run_dir}")


def _load_stats(run_dir: str) -> RunStats:
    path = Path(run_dir) / "stats.json"
    if not path.exists():
        raise click.ClickException(f"no stats.json in {run_dir} (has a run finished?)")
    try:
        return RunStats.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValueError) as exc:
        raise click.ClickException(f"unreadable stats.json: {exc}") from exc


@cli.command(name="stats")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable form.")
def stats_cmd(run_dir: str, as_json: bool):
    """Print the verified-record table and stage ledger for a run."""
    stats = _load_stats(run_dir)
    if as_json:
        click.echo(stats.to_json())
    else:
        click.echo(render_stats_text(stats), nl=False)


@cli.command(name="verify")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def verify_cmd(run_dir: str):
    """Re-check every output invariant of a finished run."""
    results = audit_run(run_dir)
    failed = 0
    for r in results:
        mark = "ok  " if r.ok else "FAIL"
        failed += 0 if r.ok else 1
        suffix = f"  {r.detail}" if r.detail else ""
        click.echo(f"{mark}  {r.name}{suffix}")
    if failed:
        raise SystemExit(1)
    click.echo(f"all {len(results)} checks passed")


def _iter_qa_lines(run_dir: Path):
    qa_dir = run_dir / "qa"
    for path in sorted(qa_dir.glob("shard-*.jsonl")):
        for line in path.read_text().splitlines():
            yield line


def _question_boxes(text: str) -> list[NormalizedBBox]:
    out = []
    for m in _BOX_IN_TEXT.finditer(text):
        out.append(NormalizedBBox(*(int(g) for g in m.groups())))
    return out


def _overlay(record, image_path: Path, out_path: Path) -> None:
    from PIL import Image, ImageDraw

    with Image.open(image_path) as im:
        canvas = im.convert("RGB")
    draw = ImageDraw.Draw(canvas)
    w, h = record.image.width, record.image.height
    for nb in _question_boxes(record.question):
        b = denormalize_bbox(nb, w, h)
        draw.rectangle([b.x_min, b.y_min, b.x_max, b.y_max], outline=(40, 90, 255), width=2)
    for nb in record.answer_boxes or ():
        b = denormalize_bbox(nb, w, h)
        draw.rectangle([b.x_min, b.y_min, b.x_max, b.y_max], outline=(40, 200, 80), width=3)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(out_path)


@cli.command(name="sample")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("-n", "count", default=5, show_default=True, help="Records to sample.")
@click.option("--seed", default=0, show_default=True, help="Sampling seed.")
def sample_cmd(run_dir: str, count: int, seed: int):
    """Print random verified records and write box-overlay images."""
    root = Path(run_dir)
    snapshot_path = root / "config.snapshot.json"
    source_bases: dict[str, Path] = {}
    if snapshot_path.exists():
        snapshot = json.loads(snapshot_path.read_text())
        for source in snapshot.get("sources", []):
            source_bases[source["name"]] = Path(source["manifest"]).parent

    rng = random.Random(seed)
    reservoir: list[str] = []
    for i, line in enumerate(_iter_qa_lines(root), start=1):
        if len(reservoir) < count:
            reservoir.append(line)
        else:
            j = int(rng.random() * i)
            if j < count:
                reservoir[j] = line
    if not reservoir:
        raise click.ClickException(f"no verified records under {root / 'qa'}")

    for line in reservoir:
        record = parse_qa_record(line)
        click.echo(json.dumps(record.to_dict(), indent=2, sort_keys=True))
        base = source_bases.get(record.image.source_dataset)
        if base is None:
            click.echo("# no source base known; overlay skipped")
            continue
        uri = record.image.uri
        image_path = Path(uri[7:]) if uri.startswith("file://") else (
            Path(uri) if Path(uri).is_absolute() else base / uri
        )
        if not image_path.exists():
            click.echo(f"# image not found, overlay skipped: {image_path}")
            continue
        out_path = root / "samples" / (record.qa_id.replace("/", "_") + ".png")
        _overlay(record, image_path, out_path)
        click.echo(f"# overlay: {out_path}")


@cli.group(name="oracle")
def oracle_group():
    """Synthetic ground-truth corpora."""


@oracle_group.command(name="gen")
@click.option("-n", "count", required=True, type=int, help="Number of scenes.")
@click.option("--seed", default=0, show_default=True)
@click.option(
    "-o",
    "out_dir",
    required=True,
    type=click.Path(file_okay=False),
    help="Output fixture directory.",
)
@click.option("--objects", default=4, show_default=True, help="Objects per scene.")
def oracle_gen(count: int, seed: int, out_dir: str, objects: int):
    """Write a synthetic fixture corpus with exact ground truth."""
    try:
        meta = write_fixture_corpus(out_dir, count, seed, objects)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        f"wrote {meta['count']} scene(s), seeds {meta['seed']}.."
        f"{meta['seed'] + meta['count'] - 1}, to {out_dir}"
    )


def main():
    cli(prog_name="forge")


if __name__ == "__main__":
    main()
