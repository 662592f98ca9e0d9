"""Video-level features for dynamism scoring.

Four groups feed the regressor:

* motion (5): blur degree, fps, I-frame / scene-change count, block-matching
  motion-vector magnitude mean and variance
* geometric (5): depth continuity, focal stability, camera angular
  acceleration, translational jerk, largest per-frame rotation step
* coverage (2): moving-pixel ratio and spatial dispersion of moving objects
* diagnostic (26): answers to the diagnostic question bank, each in [0, 1]

The default layout is motion + diagnostic (31 dims). Geometric and coverage
features gate the decision instead but can be appended through the layout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass, fields
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import laplace
from scipy.spatial.transform import Rotation

from .. import kernels
from ..errors import LayoutMismatch, TooFewFrames
from ..scene import Masklet, VideoManifest

logger = logging.getLogger(__name__)

N_DIAGNOSTIC = 26
SCENE_CHANGE_FLOOR = 30.0   # mean |frame difference| in 8-bit units
SCENE_CHANGE_MADS = 3.0
MOVING_PX_PER_FRAME = 1.0


@dataclass(frozen=True)
class MotionFeatures:
    blur_degree: float
    fps: float
    iframe_count: int
    mv_magnitude_mean: float
    mv_magnitude_var: float

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")


@dataclass(frozen=True)
class GeometricFeatures:
    depth_continuity: float = 0.0
    focal_stability: float = 0.0
    angular_acceleration: float = 0.0   # deg/s^2
    translational_jerk: float = 0.0     # m/s^3
    max_rotation_step: float = 0.0      # deg between consecutive frames


@dataclass(frozen=True)
class CoverageFeatures:
    moving_pixel_ratio: float = 0.0
    spatial_dispersion: float = 0.0


@dataclass(frozen=True)
class DiagnosticVector:
    answers: tuple[float, ...]

    def __post_init__(self):
        if len(self.answers) != N_DIAGNOSTIC:
            raise ValueError(f"diagnostic vector needs {N_DIAGNOSTIC} answers, got {len(self.answers)}")
        if any(not (0.0 <= a <= 1.0) for a in self.answers):
            raise ValueError("diagnostic answers must lie in [0, 1]")

    @classmethod
    def zeros(cls) -> "DiagnosticVector":
        return cls((0.0,) * N_DIAGNOSTIC)


def question_bank() -> list[str]:
    text = resources.files("dyncog.assets").joinpath("diagnostic_questions.txt").read_text()
    out = []
    for line in text.splitlines():
        if line.strip():
            num, _, q = line.partition(". ")
            out.append(q.strip())
    return out


# ---------------------------------------------------------------------------
# layouts

GROUP_NAMES = {
    "motion": [f.name for f in fields(MotionFeatures)],
    "geometric": [f.name for f in fields(GeometricFeatures)],
    "coverage": [f.name for f in fields(CoverageFeatures)],
    "diagnostic": [f"diag_{i:02d}" for i in range(1, N_DIAGNOSTIC + 1)],
}


@dataclass(frozen=True)
class FeatureLayout:
    groups: tuple[str, ...] = ("motion", "diagnostic")

    def __post_init__(self):
        unknown = set(self.groups) - set(GROUP_NAMES)
        if unknown:
            raise ValueError(f"unknown feature groups: {sorted(unknown)}")

    @property
    def names(self) -> list[str]:
        return [n for g in self.groups for n in GROUP_NAMES[g]]

    def __len__(self):
        return len(self.names)


DEFAULT_LAYOUT = FeatureLayout()
FULL_LAYOUT = FeatureLayout(("motion", "diagnostic", "geometric", "coverage"))


def assemble_features(motion: MotionFeatures, geometric: GeometricFeatures | None,
                      coverage: CoverageFeatures | None, diagnostic: DiagnosticVector | None,
                      layout: FeatureLayout = DEFAULT_LAYOUT, n_features: int | None = None) -> np.ndarray:
    parts = {
        "motion": motion,
        "geometric": geometric or GeometricFeatures(),
        "coverage": coverage or CoverageFeatures(),
        "diagnostic": diagnostic or DiagnosticVector.zeros(),
    }
    vec = []
    for g in layout.groups:
        p = parts[g]
        vec.extend(p.answers if g == "diagnostic" else astuple(p))
    out = np.asarray(vec, dtype=float)
    if n_features is not None and len(out) != n_features:
        raise LayoutMismatch(f"layout gives {len(out)} features, model expects {n_features}")
    return out


# ---------------------------------------------------------------------------
# motion


def blur_degree(frame: np.ndarray) -> float:
    """Variance of the 4-neighbour Laplacian over interior pixels."""
    f = np.asarray(frame, dtype=float)
    if min(f.shape) < 3:
        return 0.0
    return float(laplace(f)[1:-1, 1:-1].var())


def scene_changes(frames: Sequence[np.ndarray]) -> int:
    """Frame transitions whose mean absolute difference is an outlier.

    A transition fires when its energy is at least the fixed floor and at least
    median + 3 * MAD of all transition energies.
    """
    e = np.array([np.abs(frames[k].astype(float) - frames[k - 1].astype(float)).mean()
                  for k in range(1, len(frames))])
    if e.size == 0:
        return 0
    med = float(np.median(e))
    mad = float(np.median(np.abs(e - med)))
    thr = max(SCENE_CHANGE_FLOOR, med + SCENE_CHANGE_MADS * mad)
    return int(np.count_nonzero(e >= thr))


def motion_vectors(frames: Sequence[np.ndarray], block: int = 16, radius: int = 8) -> np.ndarray:
    """Magnitudes of all block motion vectors between consecutive frames."""
    mags = []
    for k in range(1, len(frames)):
        mv = kernels.block_match(frames[k - 1], frames[k], block, radius)
        mags.append(np.hypot(mv[..., 0], mv[..., 1]).ravel())
    return np.concatenate(mags) if mags else np.zeros(0)


def motion_features(frames: Sequence[np.ndarray], fps: float, iframe_count: int | None = None,
                    block: int = 16, radius: int = 8) -> MotionFeatures:
    """Low-level motion and quality statistics of a grayscale frame sequence.

    ``iframe_count`` comes from container metadata when the caller has it;
    otherwise the scene-change count stands in for it.
    """
    if len(frames) < 2:
        raise TooFewFrames(f"need at least 2 frames, got {len(frames)}")
    frames = [np.asarray(f) for f in frames]
    blur = float(np.mean([blur_degree(f) for f in frames]))
    if iframe_count is None:
        iframe_count = scene_changes(frames)
    mags = motion_vectors(frames, block, radius)
    if mags.size == 0:
        logger.debug("frames smaller than one search window: no motion vectors")
        mean = var = 0.0
    else:
        mean, var = float(mags.mean()), float(mags.var())
    return MotionFeatures(blur, float(fps), int(iframe_count), mean, var)


# ---------------------------------------------------------------------------
# geometry


def geometric_features(manifest: VideoManifest, tracks=None) -> GeometricFeatures:
    """Temporal stability of depth, focal length and camera motion.

    ``tracks`` is accepted for pipeline symmetry; camera quantities come from
    the manifest poses.
    """
    n = len(manifest)
    dt = 1.0 / manifest.fps

    diffs = []
    prev = manifest.depth(0)
    for t in range(1, n):
        cur = manifest.depth(t)
        ok = prev.valid_mask & cur.valid_mask
        if ok.any():
            diffs.append(float(np.abs(cur.values[ok] - prev.values[ok]).mean()))
        prev = cur
    depth_cont = float(np.mean(diffs)) if diffs else 0.0

    fx = np.array([manifest.intrinsics_at(t).fx for t in range(n)])
    focal = float(fx.std() / fx.mean())

    poses = [manifest.pose(t) for t in range(n)]
    rots = [p.world_from_camera()[0] for p in poses]
    steps = np.array([Rotation.from_matrix(rots[t] @ rots[t - 1].T).as_rotvec() for t in range(1, n)])
    if len(steps):
        omega = steps / dt
        step_deg = np.degrees(np.linalg.norm(steps, axis=1))
        max_step = float(step_deg.max())
    else:
        omega = np.zeros((0, 3))
        max_step = 0.0
    ang_acc = float(np.degrees(np.linalg.norm(np.diff(omega, axis=0), axis=1) / dt).mean()) if len(omega) > 1 else 0.0

    centers = np.array([p.center for p in poses])
    if n >= 4:
        jerk = float((np.linalg.norm(np.diff(centers, n=3, axis=0), axis=1) / dt ** 3).mean())
    else:
        jerk = 0.0
    return GeometricFeatures(depth_cont, focal, ang_acc, jerk, max_step)


# ---------------------------------------------------------------------------
# coverage


def _centroid(mask: np.ndarray) -> np.ndarray | None:
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return None
    return np.array([rows.mean(), cols.mean()])


def dynamic_coverage(masklets: Mapping[int, Masklet] | Sequence[Masklet], n_frames: int,
                     shape: tuple[int, int] | None = None) -> CoverageFeatures:
    """Share of pixels covered by moving objects and their spatial spread.

    An object is moving when its centroid travels more than 1 px per frame on
    average between its sightings.
    """
    items = list(masklets.values()) if isinstance(masklets, Mapping) else list(masklets)
    if not items or n_frames <= 0:
        return CoverageFeatures()
    h, w = shape or (items[0].height, items[0].width)
    moving = []
    for m in items:
        ts = m.present_frames()
        cents = {t: _centroid(m.get(t)) for t in ts}
        steps = [np.linalg.norm(cents[b] - cents[a]) / (b - a) for a, b in zip(ts, ts[1:])]
        if steps and float(np.mean(steps)) > MOVING_PX_PER_FRAME:
            moving.append((m, cents))
    if not moving:
        return CoverageFeatures()

    ratios = []
    pts = []
    for t in range(n_frames):
        union = np.zeros((h, w), dtype=bool)
        for m, cents in moving:
            if t in cents:
                union |= m.get(t)
                pts.append(cents[t])
        ratios.append(union.mean())
    pts = np.array(pts)
    spread = math.sqrt(float(pts.var(axis=0).sum()))
    return CoverageFeatures(float(np.mean(ratios)), min(1.0, spread / math.hypot(h, w)))


def manifest_coverage(manifest: VideoManifest) -> CoverageFeatures:
    k = manifest.intrinsics
    return dynamic_coverage({oid: manifest.masklet(oid) for oid in sorted(manifest.object_ids())},
                            len(manifest), (k.height, k.width))


def manifest_motion(manifest: VideoManifest) -> MotionFeatures:
    return motion_features([manifest.gray(t) for t in range(len(manifest))], manifest.fps)
