"""Mask-guided visual inputs: raw frames, mask overlays, and their fusion.

The default fusion layout interleaves each raw frame with its overlay
(raw first); ``layout="tile"`` places them side by side instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import DimensionMismatch
from .scene import InstanceMask, VideoManifest

logger = logging.getLogger(__name__)

# fixed 20-colour cycle, indexed by (object_id - 1) mod 20
PALETTE_20 = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
)


def palette_color(object_id: int) -> tuple[int, int, int]:
    return PALETTE_20[(object_id - 1) % len(PALETTE_20)]


class Mode(str, Enum):
    RAW = "raw"
    MASKED_ONLY = "masked_only"
    FUSION = "fusion"


@dataclass(frozen=True)
class FusionMode:
    mode: Mode = Mode.FUSION
    overlay_alpha: float = 0.5
    palette: Mapping[int, tuple[int, int, int]] | None = field(default=None, compare=False)
    layout: str = "interleave"   # or "tile" (fusion mode only)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.overlay_alpha <= 1.0:
            raise ValueError("overlay_alpha must lie in [0, 1]")
        if self.layout not in ("interleave", "tile"):
            raise ValueError(f"unknown fusion layout {self.layout!r}")

    def color(self, object_id: int) -> tuple[int, int, int]:
        if self.palette is not None and object_id in self.palette:
            return tuple(self.palette[object_id])
        return palette_color(object_id)


@dataclass(frozen=True)
class SequenceItem:
    index: int
    kind: str          # "raw", "overlay" or "tile"
    source_frame: int
    image: np.ndarray = field(repr=False, compare=False)


def overlay(frame: np.ndarray, masks: Sequence[InstanceMask], alpha: float = 0.5,
            palette: Mapping[int, tuple[int, int, int]] | None = None) -> np.ndarray:
    """Blend palette colours into ``frame`` inside each mask.

    ``out = (1 - alpha) * frame + alpha * colour``, rounded half up. Where masks
    overlap, the lowest object id supplies the colour. Pixels outside every
    mask are returned untouched.
    """
    img = np.asarray(frame)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected an (h, w, 3) colour frame, got {img.shape}")
    out = img.copy()
    if alpha == 0.0 or not masks:
        return out
    claimed = np.zeros(img.shape[:2], dtype=bool)
    for m in sorted(masks, key=lambda m: m.object_id):
        if m.pixels.shape != img.shape[:2]:
            raise DimensionMismatch(f"mask {m.pixels.shape} vs frame {img.shape[:2]}")
        region = m.pixels & ~claimed
        claimed |= m.pixels
        if not region.any():
            continue
        color = np.array(palette[m.object_id] if palette and m.object_id in palette
                         else palette_color(m.object_id), dtype=float)
        blended = (1.0 - alpha) * img[region].astype(float) + alpha * color
        out[region] = np.floor(blended + 0.5).clip(0, 255).astype(img.dtype)
    return out


def compose_sequence(manifest: VideoManifest, mode: FusionMode = FusionMode()) -> list[SequenceItem]:
    items: list[SequenceItem] = []

    def push(kind, t, image):
        items.append(SequenceItem(len(items), kind, t, image))

    for t in range(len(manifest)):
        raw = manifest.rgb(t)
        if mode.mode is Mode.RAW:
            push("raw", t, raw)
            continue
        palette = {m.object_id: mode.color(m.object_id) for m in manifest.masks(t)}
        over = overlay(raw, manifest.masks(t), mode.overlay_alpha, palette)
        if mode.mode is Mode.MASKED_ONLY:
            push("overlay", t, over)
        elif mode.layout == "tile":
            push("tile", t, np.concatenate([raw, over], axis=1))
        else:
            push("raw", t, raw)
            push("overlay", t, over)
    return items


def write_sequence(items: Sequence[SequenceItem], out_dir: str | Path) -> Path:
    """Write numbered PNGs plus ``index.json`` listing (index, kind, source frame)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for it in items:
        name = f"{it.index:06d}.png"
        Image.fromarray(it.image).save(out / name)
        index.append({"index": it.index, "kind": it.kind, "source_frame": it.source_frame, "file": name})
    path = out / "index.json"
    path.write_text(json.dumps(index, indent=1) + "\n")
    logger.info("wrote %d images to %s", len(items), out)
    return path
