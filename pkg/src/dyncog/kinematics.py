"""Metric 3D object trajectories from masks, depth, intrinsics and poses.

Pipeline per object: mask centroid + median mask depth -> back-projection to
world coordinates -> EMA smoothing of positions -> backward differences for
velocity and acceleration. Gap frames are kept as unobserved samples and the
differences span the real elapsed time across them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AlphaOutOfRange, NonPositiveDepth, NoValidDepth
from .scene import CameraPose, DepthMap, InstanceMask, Intrinsics, VideoManifest

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.6


@dataclass(frozen=True)
class TrajectorySample:
    t: int
    time_s: float
    position: np.ndarray | None
    velocity: np.ndarray | None
    acceleration: np.ndarray | None
    observed: bool


@dataclass(frozen=True, eq=False)
class ObjectTrack:
    """Per-object time series; rows cover every frame from first to last sighting.

    Arrays use NaN for undefined entries (gap frames, and velocity/acceleration
    on the first one/two observed samples). ``position`` is the smoothed
    position; ``raw_position`` is the unsmoothed back-projection.
    """

    object_id: int
    category: str
    fps: float
    t: np.ndarray
    observed: np.ndarray
    raw_position: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    bbox_size: np.ndarray

    @property
    def time_s(self) -> np.ndarray:
        return self.t / self.fps

    def __len__(self):
        return len(self.t)

    def index(self, t: int) -> int | None:
        i = int(t) - int(self.t[0])
        if 0 <= i < len(self.t):
            return i
        return None

    def is_observed(self, t: int) -> bool:
        i = self.index(t)
        return i is not None and bool(self.observed[i])

    def at(self, t: int) -> TrajectorySample | None:
        i = self.index(t)
        if i is None:
            return None

        def vec(a):
            row = a[i]
            return None if np.isnan(row).any() else row.copy()

        return TrajectorySample(int(self.t[i]), float(self.t[i] / self.fps), vec(self.position),
                                vec(self.velocity), vec(self.acceleration), bool(self.observed[i]))

    @property
    def samples(self) -> list[TrajectorySample]:
        return [self.at(int(t)) for t in self.t]

    def speed(self, t: int) -> float | None:
        s = self.at(t)
        if s is None or s.velocity is None:
            return None
        return float(np.linalg.norm(s.velocity))

    def to_record(self) -> dict:
        def clean(row):
            return None if np.isnan(row).any() else [float(v) for v in row]

        return {
            "object_id": self.object_id,
            "category": self.category,
            "units": {"position": "m", "velocity": "m/s", "acceleration": "m/s^2"},
            "samples": [
                {"t": int(self.t[i]), "time_s": float(self.t[i] / self.fps),
                 "position": clean(self.position[i]), "velocity": clean(self.velocity[i]),
                 "acceleration": clean(self.acceleration[i]), "observed": bool(self.observed[i])}
                for i in range(len(self.t))
            ],
        }


@dataclass(frozen=True, eq=False)
class TrackSet:
    video_id: str
    fps: float
    n_frames: int
    tracks: dict[int, ObjectTrack]
    camera_centers: np.ndarray
    poses: tuple[CameraPose, ...]
    dropped: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.tracks.values())

    def __getitem__(self, object_id: int) -> ObjectTrack:
        return self.tracks[object_id]

    def __len__(self):
        return len(self.tracks)

    def ids(self) -> list[int]:
        return sorted(self.tracks)


def extract_centroid(mask: InstanceMask | np.ndarray, depth: DepthMap) -> tuple[np.ndarray, float]:
    """Mean mask pixel ``(u, v)`` and median depth over valid mask pixels."""
    pix = mask.pixels if isinstance(mask, InstanceMask) else np.asarray(mask, dtype=bool)
    rows, cols = np.nonzero(pix)
    if rows.size == 0:
        raise NoValidDepth("empty mask")
    vals = depth.values[rows, cols][depth.valid_mask[rows, cols]]
    if vals.size == 0:
        raise NoValidDepth("no mask pixel has valid depth")
    return np.array([cols.mean(), rows.mean()]), float(np.median(vals))


def backproject(intrinsics: Intrinsics, pose: CameraPose, pixel: Sequence[float], depth_m: float) -> np.ndarray:
    if not depth_m > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth_m}")
    u, v = float(pixel[0]), float(pixel[1])
    cam = np.array([(u - intrinsics.cx) * depth_m / intrinsics.fx,
                    (v - intrinsics.cy) * depth_m / intrinsics.fy,
                    depth_m])
    return pose.to_world(cam)


def project(intrinsics: Intrinsics, pose: CameraPose, world_point: Sequence[float]) -> tuple[np.ndarray, float]:
    """Forward pinhole projection; returns the pixel and camera-frame depth."""
    x, y, z = pose.to_camera(np.asarray(world_point, dtype=float))
    return np.array([intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy]), float(z)


def ema_smooth(series, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    if not (0.0 < alpha <= 1.0):
        raise AlphaOutOfRange(f"alpha must be in (0, 1], got {alpha}")
    x = np.asarray(series, dtype=float)
    if len(x) == 0:
        raise ValueError("cannot smooth an empty series")
    if alpha == 1.0:
        return x.copy()
    out = np.empty_like(x)
    out[0] = x[0]
    for k in range(1, len(x)):
        # incremental form: exact on constant input, unlike a·x + (1 − a)·s
        out[k] = out[k - 1] + alpha * (x[k] - out[k - 1])
    return out


def differentiate(times, positions) -> tuple[np.ndarray, np.ndarray]:
    """Backward differences over the actual elapsed time between samples.

    Returns velocity and acceleration arrays shaped like ``positions`` with NaN
    rows where they are undefined.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(positions, dtype=float)
    vel = np.full_like(p, np.nan)
    acc = np.full_like(p, np.nan)
    if len(p) >= 2:
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("sample times must be strictly increasing")
        vel[1:] = np.diff(p, axis=0) / dt[:, None]
    if len(p) >= 3:
        acc[2:] = np.diff(vel[1:], axis=0) / np.diff(t)[1:, None]
    return vel, acc


def _bbox_extent(intrinsics: Intrinsics, pix: np.ndarray, depth: DepthMap, depth_m: float) -> np.ndarray:
    rows, cols = np.nonzero(pix)
    width = (cols.max() - cols.min() + 1) * depth_m / intrinsics.fx
    height = (rows.max() - rows.min() + 1) * depth_m / intrinsics.fy
    vals = depth.values[rows, cols][depth.valid_mask[rows, cols]]
    return np.array([width, height, float(vals.max() - vals.min())])


def build_tracks(manifest: VideoManifest, alpha: float = DEFAULT_ALPHA) -> TrackSet:
    """Reconstruct one smoothed track per object id seen in the video.

    ``bbox_size`` is in the camera axes: the back-projected pixel extent of the
    mask at its median depth, and the spread of valid depth inside the mask.
    """
    if not (0.0 < alpha <= 1.0):
        raise AlphaOutOfRange(f"alpha must be in (0, 1], got {alpha}")
    n = len(manifest)
    obs: dict[int, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
    seen: dict[int, str] = {}
    for t in range(n):
        depth = manifest.depth(t)
        k = manifest.intrinsics_at(t)
        pose = manifest.pose(t)
        for m in manifest.masks(t):
            seen.setdefault(m.object_id, m.category)
            try:
                pixel, d = extract_centroid(m, depth)
            except NoValidDepth:
                logger.debug("object %d frame %d: no valid depth, recorded as gap", m.object_id, t)
                continue
            world = backproject(k, pose, pixel, d)
            obs.setdefault(m.object_id, {})[t] = (world, _bbox_extent(k, m.pixels, depth, d))

    dropped = []
    tracks = {}
    for oid in sorted(seen):
        frames = obs.get(oid, {})
        if not frames:
            msg = f"object {oid} dropped: no frame with valid depth"
            logger.warning(msg)
            dropped.append(msg)
            continue
        ts = sorted(frames)
        span = np.arange(ts[0], ts[-1] + 1)
        observed = np.isin(span, ts)
        raw = np.full((len(span), 3), np.nan)
        size = np.full((len(span), 3), np.nan)
        for t in ts:
            raw[t - ts[0]], size[t - ts[0]] = frames[t]
        pts = raw[observed]
        smooth = ema_smooth(pts, alpha)
        vel_o, acc_o = differentiate(np.asarray(ts) / manifest.fps, smooth)
        pos = np.full_like(raw, np.nan)
        vel = np.full_like(raw, np.nan)
        acc = np.full_like(raw, np.nan)
        pos[observed], vel[observed], acc[observed] = smooth, vel_o, acc_o
        tracks[oid] = ObjectTrack(oid, manifest.categories.get(oid, seen[oid]), manifest.fps,
                                  span, observed, raw, pos, vel, acc, size)

    poses = tuple(manifest.pose(t) for t in range(n))
    centers = np.array([p.center for p in poses])
    return TrackSet(manifest.video_id, manifest.fps, n, tracks, centers, poses, dropped)
