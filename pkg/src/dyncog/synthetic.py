"""Scripted fixtures with known ground truth.

``write_scripted_scene`` renders an RGB-D video of camera-facing discs in
front of a textured wall and writes a manifest for it. The default script is
the overtake scene used throughout the tests: object 1 ("car") starts at
world (0, 0, 5) and moves along +x at 1 m/s; object 2 ("person") stands still
at (2.5, -2, 10).

``planted_clip`` generates 2D grayscale clips whose dynamism level k in 0..5
sets the number of moving objects, their speed and the background pan.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .scene import (
    CameraPose,
    FrameEntry,
    GeometryProvenance,
    Intrinsics,
    SourceDataset,
    VideoManifest,
    save_manifest,
    write_depth_f32,
    write_depth_png16,
    write_mask_png,
)

WALL_Z = 20.0
MAX_RANGE_M = 60.0   # farther wall pixels are stored as invalid depth
SCRIPTED_INTRINSICS = Intrinsics(120.0, 120.0, 160.0, 120.0, 320, 240)


@dataclass(frozen=True)
class ScriptedObject:
    object_id: int
    category: str
    radius_m: float
    intensity: int
    path: Callable[[float], np.ndarray]


def linear_path(start: Sequence[float], velocity: Sequence[float]) -> Callable[[float], np.ndarray]:
    p0 = np.asarray(start, dtype=float)
    v = np.asarray(velocity, dtype=float)
    return lambda s: p0 + v * s


def overtake_objects() -> list[ScriptedObject]:
    return [
        ScriptedObject(1, "car", 0.5, 230, linear_path((0.0, 0.0, 5.0), (1.0, 0.0, 0.0))),
        ScriptedObject(2, "person", 0.5, 20, linear_path((2.5, -2.0, 10.0), (0.0, 0.0, 0.0))),
    ]


def _wall_texture(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # incommensurate low frequencies, so block matching has a unique optimum
    rng = np.random.default_rng(7)
    acc = np.zeros_like(x)
    for _ in range(6):
        fx_, fy_ = rng.uniform(0.15, 0.6, 2) * rng.choice([-1, 1], 2)
        phase = rng.uniform(0, 2 * math.pi)
        acc += np.sin(2 * math.pi * (fx_ * x + fy_ * y) + phase)
    return 128.0 + 16.0 * acc


def yaw_pose(yaw_deg: float, center=(0.0, 0.0, 0.0)) -> CameraPose:
    a = math.radians(yaw_deg)
    r = np.array([[math.cos(a), 0.0, math.sin(a)], [0.0, 1.0, 0.0], [-math.sin(a), 0.0, math.cos(a)]])
    return CameraPose(r, np.asarray(center, dtype=float))


def render_frame(k: Intrinsics, pose: CameraPose, objects: Sequence[ScriptedObject], time_s: float,
                 rng: np.random.Generator | None = None, depth_noise_m: float = 0.0):
    """Render gray image, depth (m) and object-id map for one frame."""
    v, u = np.mgrid[0:k.height, 0:k.width].astype(float)
    rays = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    r_wc, c = pose.world_from_camera()
    d_w = rays @ r_wc.T
    s = (WALL_Z - c[2]) / d_w[..., 2]
    hit = c + s[..., None] * d_w
    gray = _wall_texture(hit[..., 0], hit[..., 1])
    far = s > MAX_RANGE_M
    gray[far] = 128.0   # featureless haze beyond sensor range
    depth = s.copy()
    ids = np.zeros((k.height, k.width), dtype=np.int32)

    placed = []
    for obj in objects:
        cam = pose.to_camera(obj.path(time_s))
        if cam[2] <= 0:
            continue
        placed.append((cam[2], obj, cam))
    for z, obj, cam in sorted(placed, key=lambda p: -p[0]):
        uc = k.fx * cam[0] / z + k.cx
        vc = k.fy * cam[1] / z + k.cy
        rad = k.fx * obj.radius_m / z
        inside = (u - uc) ** 2 + (v - vc) ** 2 <= rad * rad
        gray[inside] = obj.intensity
        depth[inside] = z
        ids[inside] = obj.object_id
    if rng is not None and depth_noise_m > 0:
        depth = depth + rng.uniform(-depth_noise_m, depth_noise_m, depth.shape)
    depth[far & (ids == 0)] = np.nan
    return np.clip(np.rint(gray), 0, 255).astype(np.uint8), depth, ids


def write_scripted_scene(out_dir: str | Path, n_frames: int = 30, fps: float = 6.0,
                         objects: Sequence[ScriptedObject] | None = None, yaw_rate_deg: float = 0.0,
                         depth_encoding: str = "png16", depth_noise_m: float = 0.0,
                         absent: dict[int, Sequence[int]] | None = None, video_id: str = "scripted",
                         intrinsics: Intrinsics = SCRIPTED_INTRINSICS, seed: int = 0) -> Path:
    """Render the scripted video and return the manifest path.

    ``absent`` maps object ids to frames where that object's mask is blanked
    (simulated occlusion); ``yaw_rate_deg`` pans the camera to the right.
    """
    out = Path(out_dir)
    for sub in ("rgb", "depth", "mask"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    objects = list(objects) if objects is not None else overtake_objects()
    absent = {oid: set(ts) for oid, ts in (absent or {}).items()}
    rng = np.random.default_rng(seed)
    frames = []
    for t in range(n_frames):
        pose = yaw_pose(yaw_rate_deg * t / fps)
        gray, depth, ids = render_frame(intrinsics, pose, objects, t / fps, rng, depth_noise_m)
        for oid, ts in absent.items():
            if t in ts:
                ids[ids == oid] = 0
        rgb = np.repeat(gray[..., None], 3, axis=2)
        Image.fromarray(rgb).save(out / "rgb" / f"{t:06d}.png")
        if depth_encoding == "png16":
            dref = out / "depth" / f"{t:06d}.png"
            write_depth_png16(dref, depth, 0.001)
        else:
            dref = out / "depth" / f"{t:06d}.f32"
            write_depth_f32(dref, depth)
        write_mask_png(out / "mask" / f"{t:06d}.png", ids)
        frames.append(FrameEntry(out / "rgb" / f"{t:06d}.png", dref, out / "mask" / f"{t:06d}.png", pose))
    (out / "categories.json").write_text(json.dumps({str(o.object_id): o.category for o in objects}))
    manifest = VideoManifest(video_id, SourceDataset.SYNTHETIC, float(fps), tuple(frames), intrinsics,
                             GeometryProvenance.GROUND_TRUTH, depth_encoding, 0.001,
                             {o.object_id: o.category for o in objects}, out)
    doc = manifest.to_dict()
    doc["categories"] = "categories.json"
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


# ---------------------------------------------------------------------------
# planted-dynamism 2D clips


@dataclass
class PlantedClip:
    level: int
    frames: np.ndarray     # (n, h, w) uint8
    id_maps: np.ndarray    # (n, h, w) int32, 0 = background
    fps: float = 6.0


def planted_clip(level: int, seed: int, n_frames: int = 12, size: tuple[int, int] = (120, 160),
                 radius: float = 9.0, fps: float = 6.0) -> PlantedClip:
    """Clip whose object count (k), object speed (k px/frame) and background
    pan (k/2 px/frame) all grow with the planted level k."""
    if not 0 <= level <= 5:
        raise ValueError("level must be in 0..5")
    rng = np.random.default_rng(seed)
    h, w = size
    pan = 0.5 * level
    margin = int(math.ceil(pan * n_frames)) + 2
    tex = gaussian_filter(rng.normal(size=(h + 2, w + margin + 2)), 2.0)
    tex = 128 + 70 * tex / (np.abs(tex).max() + 1e-12)

    centers = rng.uniform([radius + 2, radius + 2], [h - radius - 2, w - radius - 2], size=(level, 2))
    angles = rng.uniform(0, 2 * math.pi, level)
    vel = level * np.stack([np.sin(angles), np.cos(angles)], axis=1)
    shades = [235 if i % 2 == 0 else 25 for i in range(level)]

    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    frames = np.empty((n_frames, h, w), dtype=np.uint8)
    ids = np.zeros((n_frames, h, w), dtype=np.int32)
    pos = centers.copy()
    for t in range(n_frames):
        off = int(round(pan * t))
        img = tex[1:h + 1, 1 + off:1 + off + w].copy()
        for i in range(level):
            inside = (yy - pos[i, 0]) ** 2 + (xx - pos[i, 1]) ** 2 <= radius * radius
            img[inside] = shades[i]
            ids[t][inside] = i + 1
        frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        pos += vel
        for ax, lim in ((0, h), (1, w)):
            lo, hi = radius + 1, lim - radius - 1
            bounce = (pos[:, ax] < lo) | (pos[:, ax] > hi)
            vel[bounce, ax] *= -1
            pos[:, ax] = np.clip(pos[:, ax], lo, hi)
    return PlantedClip(level, frames, ids, fps)


def write_clip_manifest(clip: PlantedClip, out_dir: str | Path, video_id: str,
                        depth_m: float = 5.0, focal: float = 150.0) -> Path:
    """Wrap a 2D clip as a manifest with a fixed camera and a flat depth plane."""
    out = Path(out_dir)
    for sub in ("rgb", "depth", "mask"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    n, h, w = clip.frames.shape
    k = Intrinsics(focal, focal, w / 2, h / 2, w, h)
    frames = []
    for t in range(n):
        rgb = np.repeat(clip.frames[t][..., None], 3, axis=2)
        Image.fromarray(rgb).save(out / "rgb" / f"{t:06d}.png")
        write_depth_png16(out / "depth" / f"{t:06d}.png", np.full((h, w), depth_m), 0.001)
        write_mask_png(out / "mask" / f"{t:06d}.png", clip.id_maps[t])
        frames.append(FrameEntry(out / "rgb" / f"{t:06d}.png", out / "depth" / f"{t:06d}.png",
                                 out / "mask" / f"{t:06d}.png", CameraPose.identity()))
    cats = {i: "blob" for i in range(1, int(clip.id_maps.max()) + 1)}
    manifest = VideoManifest(video_id, SourceDataset.SYNTHETIC, clip.fps, tuple(frames), k,
                             GeometryProvenance.GROUND_TRUTH, "png16", 0.001, cats, out)
    path = out / "manifest.json"
    save_manifest(manifest, path)
    return path
