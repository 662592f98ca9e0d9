"""Inter-object motion relations and camera-relative directions.

Camera frame convention: x right, y down, z forward. Azimuth is
``atan2(x, z)`` (positive to the right) and elevation ``atan2(-y, hypot(x, z))``
(positive upward), both in degrees.

Direction sectors (half-open so every angle gets exactly one label)::

    front  [-45, 45)      right [45, 135)
    back   [135, 180] U (-180, -135)
    left   [-135, -45)

and ``above`` / ``below`` is appended when ``|elevation| >= 30``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import AtCameraCenter, CoincidentWarning
from .kinematics import TrackSet
from .scene import CameraPose

DEFAULT_EPS_REL = 0.05
DEFAULT_MIN_RUN = 2
VERTICAL_REFINE_DEG = 30.0


class Relation(str, Enum):
    APPROACHING = "approaching"
    RECEDING = "receding"
    PARALLEL = "parallel"


@dataclass(frozen=True)
class RelationSample:
    t: int
    pair: tuple[int, int]
    distance_m: float
    closing_speed: float
    relation: Relation


@dataclass(frozen=True)
class DirectionSample:
    t: int
    object_id: int
    azimuth_deg: float
    elevation_deg: float
    distance_m: float
    direction: str
    vertical: str | None = None

    @property
    def label(self) -> str:
        return self.direction if self.vertical is None else f"{self.direction}-{self.vertical}"


@dataclass(frozen=True)
class RelationTimeline:
    relations: tuple[RelationSample, ...]
    directions: tuple[DirectionSample, ...]
    # pair -> [(t, debounced label)] over the frames where the pair was classified
    debounced: dict[tuple[int, int], list[tuple[int, Relation]]] = field(default_factory=dict)

    def relations_at(self, t: int) -> list[RelationSample]:
        return [r for r in self.relations if r.t == t]

    def directions_at(self, t: int) -> list[DirectionSample]:
        return [d for d in self.directions if d.t == t]

    def pair_series(self, pair: tuple[int, int]) -> list[RelationSample]:
        return [r for r in self.relations if r.pair == pair]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted({r.pair for r in self.relations})

    def to_records(self, fps: float) -> list[dict]:
        """Flat export: one record per relation or direction sample."""
        out = []
        for r in self.relations:
            out.append({"t": r.t, "time_s": r.t / fps, "pair": list(r.pair), "distance_m": r.distance_m,
                        "closing_speed": r.closing_speed, "label": r.relation.value})
        for d in self.directions:
            out.append({"t": d.t, "time_s": d.t / fps, "object_id": d.object_id,
                        "azimuth_deg": d.azimuth_deg, "elevation_deg": d.elevation_deg,
                        "distance_m": d.distance_m, "label": d.label})
        out.sort(key=lambda rec: (rec["t"], "pair" not in rec, rec.get("pair", [rec.get("object_id")])))
        return out


def closing_speed(pos_a, pos_b, vel_a, vel_b) -> float:
    """Rate at which the distance between two points shrinks (m/s)."""
    r = np.asarray(pos_b, dtype=float) - np.asarray(pos_a, dtype=float)
    w = np.asarray(vel_b, dtype=float) - np.asarray(vel_a, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        warnings.warn("coincident objects: closing speed undefined, returning 0", CoincidentWarning,
                      stacklevel=2)
        return 0.0
    return -float(r @ w) / dist


def classify_relation(closing: float, eps_rel: float = DEFAULT_EPS_REL) -> Relation:
    if eps_rel < 0:
        raise ValueError("eps_rel must be non-negative")
    if closing > eps_rel:
        return Relation.APPROACHING
    if closing < -eps_rel:
        return Relation.RECEDING
    return Relation.PARALLEL


def sector(azimuth_deg: float, elevation_deg: float) -> tuple[str, str | None]:
    a = azimuth_deg
    if -45.0 <= a < 45.0:
        horiz = "front"
    elif 45.0 <= a < 135.0:
        horiz = "right"
    elif -135.0 <= a < -45.0:
        horiz = "left"
    else:
        horiz = "back"
    vert = None
    if abs(elevation_deg) >= VERTICAL_REFINE_DEG:
        vert = "above" if elevation_deg > 0 else "below"
    return horiz, vert


def camera_direction(pose: CameraPose, world_point, t: int = 0, object_id: int = -1) -> DirectionSample:
    x, y, z = pose.to_camera(np.asarray(world_point, dtype=float))
    dist = math.sqrt(x * x + y * y + z * z)
    if dist == 0.0:
        raise AtCameraCenter("point coincides with the camera center")
    az = math.degrees(math.atan2(x, z))
    if az == -180.0:
        az = 180.0
    el = math.degrees(math.atan2(-y, math.hypot(x, z)))
    horiz, vert = sector(az, el)
    return DirectionSample(t, object_id, az, el, dist, horiz, vert)


def debounce(labels: Sequence, min_run: int = DEFAULT_MIN_RUN) -> list:
    """Suppress label runs shorter than ``min_run`` frames.

    A short run inherits the last stable label; short runs before the first
    stable run take that first stable label. With no stable run at all the
    input is returned unchanged.
    """
    if not labels:
        return []
    runs = []
    for lab in labels:
        if runs and runs[-1][0] == lab:
            runs[-1][1] += 1
        else:
            runs.append([lab, 1])
    stable = [r[0] if r[1] >= min_run else None for r in runs]
    if all(s is None for s in stable):
        return list(labels)
    current = next(s for s in stable if s is not None)
    out = []
    for (lab, n), s in zip(runs, stable):
        if s is not None:
            current = s
        out.extend([current] * n)
    return out


def infer_timeline(tracks: TrackSet, eps_rel: float = DEFAULT_EPS_REL,
                   min_run: int = DEFAULT_MIN_RUN) -> RelationTimeline:
    """Per-frame pair relations and camera directions for a reconstructed video.

    A pair is classified at frame ``t`` when both objects are observed there and
    both have a defined velocity (from their second observed sample on).
    """
    relations = []
    directions = []
    ids = tracks.ids()
    for t in range(tracks.n_frames):
        pose = tracks.poses[t]
        for oid in ids:
            s = tracks[oid].at(t)
            if s is None or not s.observed:
                continue
            try:
                directions.append(camera_direction(pose, s.position, t, oid))
            except AtCameraCenter:
                continue
        for a, b in combinations(ids, 2):
            sa, sb = tracks[a].at(t), tracks[b].at(t)
            if sa is None or sb is None or not (sa.observed and sb.observed):
                continue
            if sa.velocity is None or sb.velocity is None:
                continue
            c = closing_speed(sa.position, sb.position, sa.velocity, sb.velocity)
            d = float(np.linalg.norm(sb.position - sa.position))
            relations.append(RelationSample(t, (a, b), d, c, classify_relation(c, eps_rel)))

    debounced = {}
    for pair in sorted({r.pair for r in relations}):
        series = [r for r in relations if r.pair == pair]
        labels = debounce([r.relation for r in series], min_run)
        debounced[pair] = [(r.t, lab) for r, lab in zip(series, labels)]
    return RelationTimeline(tuple(relations), tuple(directions), debounced)
