"""Synthetic fixture corpora: rasters, depth artifacts, and ground truth.

A fixture directory is a complete, self-contained input corpus whose every
answer is known exactly. All file references inside it are relative, so
the directory can move between machines without changing a byte of any
downstream output.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from PIL import Image

from ..model import ImageRef, RecordError, serialize_scene_record
from ..oracle import (
    Camera,
    LayoutConfig,
    OracleProvider,
    gen_scene,
    project,
    relations_to_dict,
    render_preview,
)
from ..providers.base import save_depth_artifact

META_NAME = "corpus.json"
SOURCE_NAME = "oracle"

# Fixture corpora use a long lens and tight aspect coupling so that every
# non-occluded object projects to a box that clears the downstream pixel
# filters (area >= 100x100 px, aspect within [1/3, 3]) on merit.
FIXTURE_CAMERA = Camera(focal_px=1000.0, width=1280, height=720)
FIXTURE_LAYOUT = LayoutConfig(
    y_range=(-0.22, 0.22),
    hy_range=(0.1, 1.2),
    max_attempts_per_object=800,
    hx_cap_floor_fraction=0.88,
    hy_ratio_range=(1.3, 2.2),
)


def _layout_to_dict(layout: LayoutConfig) -> dict:
    out = dataclasses.asdict(layout)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def _layout_from_dict(raw: dict) -> LayoutConfig:
    kwargs = {
        k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()
    }
    return LayoutConfig(**kwargs)


def _image_name(image_id: str) -> str:
    return f"images/{image_id}.png"


def _depth_name(image_id: str) -> str:
    return f"depth/{image_id}.npy"


def write_fixture_corpus(
    out_dir: str | Path,
    count: int,
    seed: int = 0,
    objects_per_scene: int = 4,
    camera: Camera | None = None,
    layout: LayoutConfig | None = None,
) -> dict:
    """Emit `count` scenes (seeds seed..seed+count-1) with every artifact.

    Layout: images/*.png rasters, depth/*.npy + sidecars, manifest.jsonl
    (image references with relative uris), scenes.jsonl (ground-truth scene
    records), relations.jsonl (exact pair/person relations), corpus.json
    (the parameters needed to regenerate everything).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    camera = camera or FIXTURE_CAMERA
    layout = layout or FIXTURE_LAYOUT

    manifest_lines: list[str] = []
    scene_lines: list[str] = []
    relation_lines: list[str] = []
    for i in range(count):
        scene = gen_scene(seed + i, objects_per_scene, layout=layout, camera=camera)
        proj = project(scene)
        image_id = proj.record.image.image_id
        Image.fromarray(render_preview(scene)).save(out / _image_name(image_id))
        save_depth_artifact(proj.depth, out / _depth_name(image_id))
        ref = ImageRef(
            source_dataset=SOURCE_NAME,
            image_id=image_id,
            uri=_image_name(image_id),
            width=camera.width,
            height=camera.height,
            depth_uri=_depth_name(image_id),
        )
        manifest_lines.append(json.dumps(ref.to_dict(), sort_keys=True))
        record = dataclasses.replace(proj.record, image=ref)
        scene_lines.append(serialize_scene_record(record))
        relation_lines.append(
            json.dumps(relations_to_dict(scene), sort_keys=True)
        )

    (out / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n")
    (out / "scenes.jsonl").write_text("\n".join(scene_lines) + "\n")
    (out / "relations.jsonl").write_text("\n".join(relation_lines) + "\n")
    meta = {
        "seed": seed,
        "count": count,
        "objects_per_scene": objects_per_scene,
        "camera": {
            "focal_px": camera.focal_px,
            "width": camera.width,
            "height": camera.height,
        },
        "layout": _layout_to_dict(layout),
        "source_dataset": SOURCE_NAME,
    }
    (out / META_NAME).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return meta


def load_fixture_provider(fixture_dir: str | Path) -> OracleProvider:
    """Rebuild the ground-truth expert for a corpus written by
    write_fixture_corpus; regeneration from the recorded parameters is
    deterministic, so the answers match the artifacts exactly."""
    meta_path = Path(fixture_dir) / META_NAME
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise RecordError(f"not a fixture corpus (no {META_NAME}): {fixture_dir}") from None
    cam = meta["camera"]
    camera = Camera(
        focal_px=float(cam["focal_px"]),
        width=int(cam["width"]),
        height=int(cam["height"]),
    )
    layout = _layout_from_dict(meta["layout"]) if "layout" in meta else LayoutConfig()
    scenes = [
        gen_scene(
            int(meta["seed"]) + i,
            int(meta["objects_per_scene"]),
            layout=layout,
            camera=camera,
        )
        for i in range(int(meta["count"]))
    ]
    return OracleProvider.from_scenes(scenes)
