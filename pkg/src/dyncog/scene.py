"""Dataset data model: manifests, camera geometry and per-frame assets.

A manifest is one JSON document per video. Asset paths inside it are relative
to the manifest's directory::

    {
      "video_id": "scripted",
      "source_dataset": "davis",
      "fps": 6.0,
      "geometry_provenance": "ground_truth",
      "pose_convention": "world_from_camera",
      "intrinsics": {"fx": 120, "fy": 120, "cx": 160, "cy": 120,
                     "width": 320, "height": 240},
      "depth_encoding": "png16",          # or "float32"
      "depth_scale": 0.001,               # meters per stored unit (png16 only)
      "categories": "categories.json",    # sidecar {"1": "car", ...} or inline dict
      "frames": [
        {"rgb": "rgb/000000.png", "depth": "depth/000000.png",
         "mask": "mask/000000.png", "pose": [r00, r01, r02, t0, ..., r22, t2]}
      ]
    }

Frames may carry an ``"intrinsics"`` object overriding the video-level one.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import (
    CorruptAsset,
    DegenerateVideo,
    MissingAsset,
    SchemaViolation,
    UnsupportedEncoding,
)

logger = logging.getLogger(__name__)

TARGET_FPS = 6.0
F32_MAGIC = b"DYNCOG-F32"


class SourceDataset(str, Enum):
    DAVIS = "davis"
    SA_V = "sa_v"
    DYNPOSE_100K = "dynpose_100k"
    YOUTUBE_VIS = "youtube_vis"
    DYNAMIC_REPLICA = "dynamic_replica"
    POINT_ODYSSEY = "point_odyssey"
    SPRING = "spring"
    TOTAL_RECON = "total_recon"
    # generated fixtures, not part of the benchmark corpora
    SYNTHETIC = "synthetic"


class GeometryProvenance(str, Enum):
    GROUND_TRUTH = "ground_truth"
    ESTIMATED = "estimated"


class PoseConvention(str, Enum):
    WORLD_FROM_CAMERA = "world_from_camera"
    CAMERA_FROM_WORLD = "camera_from_world"


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise SchemaViolation(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise SchemaViolation("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Intrinsics":
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       int(d["width"]), int(d["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"bad intrinsics: {exc}") from exc

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Rigid camera transform ``x_out = R @ x_in + t``.

    With ``world_from_camera`` the transform maps camera coordinates to world
    coordinates; with ``camera_from_world`` it maps the other way.
    """

    rotation: np.ndarray
    translation: np.ndarray
    convention: PoseConvention = PoseConvention.WORLD_FROM_CAMERA

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3) or not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise SchemaViolation("pose must be a finite 3x3 rotation and 3-vector translation")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6, rtol=0):
            raise SchemaViolation("pose rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise SchemaViolation("pose rotation must have determinant +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "convention", PoseConvention(self.convention))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_row_major(cls, values: Sequence[float], convention=PoseConvention.WORLD_FROM_CAMERA):
        arr = np.asarray(values, dtype=float)
        if arr.shape != (12,):
            raise SchemaViolation(f"pose needs 12 numbers (row-major 3x4), got {arr.size}")
        m = arr.reshape(3, 4)
        return cls(m[:, :3], m[:, 3], convention)

    def to_row_major(self) -> list[float]:
        return np.hstack([self.rotation, self.translation[:, None]]).ravel().tolist()

    def world_from_camera(self) -> tuple[np.ndarray, np.ndarray]:
        if self.convention is PoseConvention.WORLD_FROM_CAMERA:
            return self.rotation, self.translation
        r = self.rotation.T
        return r, -r @ self.translation

    def camera_from_world(self) -> tuple[np.ndarray, np.ndarray]:
        if self.convention is PoseConvention.CAMERA_FROM_WORLD:
            return self.rotation, self.translation
        r = self.rotation.T
        return r, -r @ self.translation

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.world_from_camera()[1]

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        r, t = self.world_from_camera()
        return np.asarray(points_cam, dtype=float) @ r.T + t

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        r, t = self.camera_from_world()
        return np.asarray(points_world, dtype=float) @ r.T + t

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (self.convention == other.convention
                and np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.convention, self.rotation.tobytes(), self.translation.tobytes()))


@dataclass(frozen=True, eq=False)
class DepthMap:
    values: np.ndarray
    valid_mask: np.ndarray
    scale_hint: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.valid_mask, dtype=bool) & np.isfinite(v) & (v > 0)
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid_mask", m)

    @classmethod
    def from_array(cls, values: np.ndarray, scale_hint: float = 1.0) -> "DepthMap":
        v = np.asarray(values, dtype=np.float64)
        return cls(v, np.isfinite(v) & (v > 0), scale_hint)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class InstanceMask:
    object_id: int
    category: str
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=bool)
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def area(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True)
class Masklet:
    """One object's masks over a video; absent frames are simply missing keys."""

    object_id: int
    category: str
    height: int
    width: int
    masks: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        fixed = {}
        for t in sorted(self.masks):
            m = np.asarray(self.masks[t], dtype=bool)
            if m.shape != (self.height, self.width):
                raise SchemaViolation(f"masklet frame {t} has shape {m.shape}")
            if int(t) < 0:
                raise SchemaViolation("frame indices must be non-negative")
            m.setflags(write=False)
            fixed[int(t)] = m
        object.__setattr__(self, "masks", fixed)

    @property
    def frames(self) -> list[int]:
        return list(self.masks)

    def get(self, t: int) -> np.ndarray:
        """Mask at frame ``t``; all-false when the object is absent."""
        m = self.masks.get(t)
        return m if m is not None else np.zeros((self.height, self.width), dtype=bool)

    def present_frames(self) -> list[int]:
        return [t for t, m in self.masks.items() if m.any()]

    def __eq__(self, other):
        if not isinstance(other, Masklet):
            return NotImplemented
        if (self.object_id, self.category, self.height, self.width) != (
                other.object_id, other.category, other.height, other.width):
            return False
        if list(self.masks) != list(other.masks):
            return False
        return all(np.array_equal(self.masks[t], other.masks[t]) for t in self.masks)


# ---------------------------------------------------------------------------
# run-length encoding


def rle_encode(mask: np.ndarray) -> list[list[int]]:
    """Encode a boolean mask as ``[start, length]`` runs of true pixels (row-major)."""
    flat = np.asarray(mask, dtype=bool).ravel()
    padded = np.concatenate([[False], flat, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = edges[0::2], edges[1::2]
    return [[int(s), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs: Sequence[Sequence[int]], height: int, width: int) -> np.ndarray:
    flat = np.zeros(height * width, dtype=bool)
    for start, length in runs:
        if start < 0 or length <= 0 or start + length > flat.size:
            raise CorruptAsset(f"run ({start}, {length}) outside a {height}x{width} mask")
        flat[start:start + length] = True
    return flat.reshape(height, width)


def masklet_to_dict(masklet: Masklet) -> dict:
    return {
        "object_id": masklet.object_id,
        "category": masklet.category,
        "height": masklet.height,
        "width": masklet.width,
        "frames": {str(t): rle_encode(m) for t, m in masklet.masks.items()},
    }


def masklet_from_dict(d: Mapping) -> Masklet:
    try:
        h, w = int(d["height"]), int(d["width"])
        masks = {int(t): rle_decode(runs, h, w) for t, runs in d["frames"].items()}
        return Masklet(int(d["object_id"]), str(d.get("category", "")), h, w, masks)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad masklet record: {exc}") from exc


def masklet_roundtrip(masklet: Masklet) -> Masklet:
    return masklet_from_dict(json.loads(json.dumps(masklet_to_dict(masklet))))


# ---------------------------------------------------------------------------
# asset codecs


def write_depth_png16(path: Path, depth_m: np.ndarray, scale: float) -> None:
    """Store meters as uint16 units of ``scale``; invalid pixels become 0."""
    d = np.asarray(depth_m, dtype=np.float64)
    units = np.where(np.isfinite(d) & (d > 0), np.rint(d / scale), 0)
    if units.max(initial=0) > 65535:
        raise ValueError("depth exceeds 16-bit range at this scale")
    Image.fromarray(units.astype(np.uint16)).save(path)


def write_depth_f32(path: Path, depth_m: np.ndarray) -> None:
    d = np.ascontiguousarray(depth_m, dtype="<f4")
    h, w = d.shape
    with open(path, "wb") as fh:
        fh.write(F32_MAGIC + f" {w} {h}\n".encode())
        fh.write(d.tobytes())


def decode_depth(ref: str | Path, scale_hint: float = 1.0, encoding: str | None = None) -> DepthMap:
    """Decode a depth asset into meters.

    ``png16`` stores integer units of ``scale_hint`` meters; ``float32`` stores
    meters directly after a one-line ``DYNCOG-F32 <width> <height>`` header.
    Stored zeros and non-finite values become invalid pixels.
    """
    path = Path(ref)
    if encoding is None:
        encoding = {".png": "png16", ".f32": "float32"}.get(path.suffix.lower())
    if encoding not in ("png16", "float32"):
        raise UnsupportedEncoding(f"unsupported depth encoding for {path.name!r}")
    if not path.exists():
        raise MissingAsset(str(path))
    if encoding == "png16":
        try:
            with Image.open(path) as img:
                raw = np.array(img)
        except (OSError, SyntaxError, ValueError) as exc:
            raise CorruptAsset(f"{path}: {exc}") from exc
        if raw.ndim != 2 or raw.dtype.kind not in "ui":
            raise UnsupportedEncoding(f"{path} is not a single-channel integer image")
        raw = raw.astype(np.float64)
        valid = raw > 0
        return DepthMap(np.where(valid, raw * scale_hint, 0.0), valid, scale_hint)

    blob = path.read_bytes()
    head, sep, body = blob.partition(b"\n")
    parts = head.split()
    if not sep or len(parts) != 3 or parts[0] != F32_MAGIC:
        raise CorruptAsset(f"{path}: missing float32 depth header")
    try:
        w, h = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise CorruptAsset(f"{path}: bad header") from exc
    if len(body) != 4 * w * h:
        raise CorruptAsset(f"{path}: expected {4 * w * h} bytes of data, found {len(body)}")
    values = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    valid = np.isfinite(values) & (values > 0)
    return DepthMap(np.where(valid, values, 0.0), valid, 1.0)


def write_mask_png(path: Path, id_map: np.ndarray) -> None:
    ids = np.asarray(id_map)
    dtype = np.uint8 if ids.max(initial=0) < 256 else np.uint16
    Image.fromarray(ids.astype(dtype)).save(path)


def decode_masks(ref: str | Path, categories: Mapping[int, str]) -> list[InstanceMask]:
    """Split an indexed mask image (pixel value = object id, 0 = background)."""
    path = Path(ref)
    if not path.exists():
        raise MissingAsset(str(path))
    try:
        with Image.open(path) as img:
            ids = np.array(img)
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptAsset(f"{path}: {exc}") from exc
    if ids.ndim != 2:
        raise UnsupportedEncoding(f"{path} is not a single-channel index image")
    out = []
    for oid in np.unique(ids):
        if oid == 0:
            continue
        out.append(InstanceMask(int(oid), categories.get(int(oid), "object"), ids == oid))
    return out


def decode_rgb(ref: str | Path) -> np.ndarray:
    path = Path(ref)
    if not path.exists():
        raise MissingAsset(str(path))
    try:
        with Image.open(path) as img:
            return np.array(img.convert("RGB"))
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptAsset(f"{path}: {exc}") from exc


def to_gray(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class FrameEntry:
    rgb_ref: Path
    depth_ref: Path
    mask_ref: Path
    pose: CameraPose
    intrinsics: Intrinsics | None = None


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    source_dataset: SourceDataset
    fps: float
    frames: tuple[FrameEntry, ...]
    intrinsics: Intrinsics
    geometry_provenance: GeometryProvenance
    depth_encoding: str = "png16"
    depth_scale: float = 0.001
    categories: Mapping[int, str] = field(default_factory=dict)
    root: Path = Path(".")

    def __post_init__(self):
        if len(self.frames) < 2:
            raise DegenerateVideo(f"video {self.video_id!r} has {len(self.frames)} frame(s); need >= 2")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise SchemaViolation("fps must be positive")

    def __len__(self):
        return len(self.frames)

    def intrinsics_at(self, t: int) -> Intrinsics:
        return self.frames[t].intrinsics or self.intrinsics

    def depth(self, t: int) -> DepthMap:
        return decode_depth(self.frames[t].depth_ref, self.depth_scale, self.depth_encoding)

    def masks(self, t: int) -> list[InstanceMask]:
        return decode_masks(self.frames[t].mask_ref, self.categories)

    def rgb(self, t: int) -> np.ndarray:
        return decode_rgb(self.frames[t].rgb_ref)

    def gray(self, t: int) -> np.ndarray:
        return to_gray(self.rgb(t))

    def pose(self, t: int) -> CameraPose:
        return self.frames[t].pose

    def object_ids(self) -> set[int]:
        ids: set[int] = set()
        for t in range(len(self.frames)):
            ids.update(m.object_id for m in self.masks(t))
        return ids

    def masklet(self, object_id: int) -> Masklet:
        h, w = self.intrinsics.height, self.intrinsics.width
        masks = {}
        for t in range(len(self.frames)):
            for m in self.masks(t):
                if m.object_id == object_id:
                    masks[t] = m.pixels
        return Masklet(object_id, self.categories.get(object_id, "object"), h, w, masks)

    def to_dict(self) -> dict:
        def rel(p: Path) -> str:
            try:
                return p.relative_to(self.root).as_posix()
            except ValueError:
                return str(p)

        frames = []
        for f in self.frames:
            entry = {"rgb": rel(f.rgb_ref), "depth": rel(f.depth_ref), "mask": rel(f.mask_ref),
                     "pose": f.pose.to_row_major()}
            if f.intrinsics is not None:
                entry["intrinsics"] = f.intrinsics.to_dict()
            frames.append(entry)
        convention = self.frames[0].pose.convention.value
        return {
            "video_id": self.video_id,
            "source_dataset": self.source_dataset.value,
            "fps": self.fps,
            "geometry_provenance": self.geometry_provenance.value,
            "pose_convention": convention,
            "intrinsics": self.intrinsics.to_dict(),
            "depth_encoding": self.depth_encoding,
            "depth_scale": self.depth_scale,
            "categories": {str(k): v for k, v in sorted(self.categories.items())},
            "frames": frames,
        }


def _require(d: Mapping, key: str, kind):
    if key not in d:
        raise SchemaViolation(f"manifest is missing {key!r}")
    value = d[key]
    if not isinstance(value, kind):
        raise SchemaViolation(f"manifest field {key!r} has the wrong type")
    return value


def load_manifest(path: str | Path, validate_assets: bool = True) -> VideoManifest:
    """Parse and validate a manifest.

    With ``validate_assets`` every frame's depth and mask are decoded once so
    an accepted manifest is guaranteed to decode downstream.
    """
    path = Path(path)
    if not path.exists():
        raise MissingAsset(str(path))
    try:
        doc = json.loads(path.read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("manifest root must be an object")
    root = path.parent

    video_id = _require(doc, "video_id", str)
    frames_raw = _require(doc, "frames", list)
    if len(frames_raw) < 2:
        raise DegenerateVideo(f"video {video_id!r} has {len(frames_raw)} frame(s); need >= 2")
    try:
        source = SourceDataset(_require(doc, "source_dataset", str))
        provenance = GeometryProvenance(_require(doc, "geometry_provenance", str))
        convention = PoseConvention(doc.get("pose_convention", "world_from_camera"))
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from exc
    fps = _require(doc, "fps", (int, float))
    intrinsics = Intrinsics.from_dict(_require(doc, "intrinsics", dict))
    encoding = doc.get("depth_encoding", "png16")
    if encoding not in ("png16", "float32"):
        raise UnsupportedEncoding(f"depth encoding {encoding!r}")
    scale = float(doc.get("depth_scale", 0.001))

    cats = doc.get("categories", {})
    if isinstance(cats, str):
        cat_path = root / cats
        if not cat_path.exists():
            raise MissingAsset(str(cat_path))
        cats = json.loads(cat_path.read_text())
    if not isinstance(cats, dict):
        raise SchemaViolation("categories must be an object or a sidecar path")
    try:
        categories = {int(k): str(v) for k, v in cats.items()}
    except ValueError as exc:
        raise SchemaViolation(f"category keys must be integer ids: {exc}") from exc

    frames = []
    for i, fr in enumerate(frames_raw):
        if not isinstance(fr, dict):
            raise SchemaViolation(f"frame {i} must be an object")
        refs = []
        for key in ("rgb", "depth", "mask"):
            ref = fr.get(key)
            if not isinstance(ref, str):
                raise SchemaViolation(f"frame {i} lacks a {key!r} reference")
            p = root / ref
            if not p.exists():
                raise MissingAsset(f"frame {i}: {p}")
            refs.append(p)
        pose = CameraPose.from_row_major(fr.get("pose", []), convention)
        fi = Intrinsics.from_dict(fr["intrinsics"]) if "intrinsics" in fr else None
        frames.append(FrameEntry(refs[0], refs[1], refs[2], pose, fi))

    manifest = VideoManifest(video_id, source, float(fps), tuple(frames), intrinsics, provenance,
                             encoding, scale, categories, root)
    if validate_assets:
        for t in range(len(manifest)):
            depth = manifest.depth(t)
            k = manifest.intrinsics_at(t)
            if depth.shape != (k.height, k.width):
                raise SchemaViolation(f"frame {t}: depth shape {depth.shape} != intrinsics size")
            for m in manifest.masks(t):
                if m.pixels.shape != depth.shape:
                    raise SchemaViolation(f"frame {t}: mask shape differs from depth shape")
    return manifest


def save_manifest(manifest: VideoManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")


def resample(manifest: VideoManifest, target_fps: float = TARGET_FPS) -> VideoManifest:
    """Keep the frames nearest to a ``target_fps`` grid; slower videos pass through."""
    if manifest.fps <= target_fps + 1e-9:
        return manifest
    step = manifest.fps / target_fps
    n_out = int(math.floor((len(manifest) - 1) / step)) + 1
    idx = sorted({min(len(manifest) - 1, int(round(k * step))) for k in range(n_out)})
    if len(idx) < 2:
        raise DegenerateVideo(f"video {manifest.video_id!r} is too short to resample to {target_fps} fps")
    logger.info("resampled %s from %.2f to %.2f fps (%d -> %d frames)",
                manifest.video_id, manifest.fps, target_fps, len(manifest), len(idx))
    return replace(manifest, fps=target_fps, frames=tuple(manifest.frames[i] for i in idx))
