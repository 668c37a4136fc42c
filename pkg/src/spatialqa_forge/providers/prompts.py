"""Prompt template assets for the expert providers.

Each asset holds a SYSTEM: block and optionally a USER: block with named
placeholders. These texts are shipped verbatim as operating data; requests
compose them with per-call fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources


@dataclass(frozen=True, slots=True)
class PromptAsset:
    name: str
    system: str
    user: str


def load_prompt(name: str) -> PromptAsset:
    text = (
        resources.files("spatialqa_forge")
        .joinpath("assets", "prompts", f"{name}.txt")
        .read_text(encoding="utf-8")
    )
    if not text.startswith("SYSTEM:"):
        raise ValueError(f"prompt asset {name} lacks SYSTEM block")
    body = text[len("SYSTEM:"):]
    if "\nUSER:" in body:
        system, user = body.split("\nUSER:", 1)
    else:
        system, user = body, ""
    return PromptAsset(name=name, system=system.strip(), user=user.strip())


def region_user_prompt(
    asset: PromptAsset,
    hint: str,
    xmin: float,
    ymin: float,
    xmax: float,
    ymax: float,
    width: int,
    height: int,
    region_note: str = "",
    fisheye_note: str = "",
    position_hint: str = "",
) -> str:
    filled = asset.user.format(
        region_note=region_note,
        fisheye_note=fisheye_note,
        position_hint=position_hint,
        hint=hint,
        xmin=round(xmin),
        ymin=round(ymin),
        xmax=round(xmax),
        ymax=round(ymax),
        W=width,
        H=height,
    )
    # optional notes left empty should not leave blank lines behind
    return "\n".join(line for line in filled.splitlines() if line.strip())
