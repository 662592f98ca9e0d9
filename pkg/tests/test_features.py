from dataclasses import replace

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from dyncog.errors import LayoutMismatch, TooFewFrames
from dyncog.filtering.features import (
    DEFAULT_LAYOUT,
    FULL_LAYOUT,
    CoverageFeatures,
    DiagnosticVector,
    FeatureLayout,
    GeometricFeatures,
    MotionFeatures,
    assemble_features,
    blur_degree,
    dynamic_coverage,
    geometric_features,
    motion_features,
    question_bank,
    scene_changes,
)
from dyncog.scene import CameraPose, Masklet


def textured(h=96, w=200, seed=0):
    rng = np.random.default_rng(seed)
    tex = gaussian_filter(rng.normal(size=(h, w)), 2.0)
    return np.clip(128 + 60 * tex / np.abs(tex).max(), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- motion

def test_constant_gray_video():
    frames = [np.full((64, 64), 90, np.uint8)] * 5
    f = motion_features(frames, 6.0)
    assert (f.blur_degree, f.mv_magnitude_mean, f.mv_magnitude_var, f.iframe_count) == (0.0, 0.0, 0.0, 0)


def test_horizontal_pan():
    tex = textured(w=260)
    frames = [tex[:, 4 * k:4 * k + 160] for k in range(6)]
    f = motion_features(frames, 6.0)
    assert f.mv_magnitude_mean == pytest.approx(4.0, abs=0.5)
    assert f.mv_magnitude_var == pytest.approx(0.0, abs=0.05)


def test_alternating_frames_are_all_scene_changes():
    frames = [np.full((32, 32), 255 * (k % 2), np.uint8) for k in range(7)]
    assert scene_changes(frames) == 6


def test_single_cut_is_found():
    a, b = textured(seed=1), textured(seed=2) // 4     # cut to a dark shot
    assert scene_changes([a, a, a, b, b, b]) == 1


def test_too_few_frames():
    with pytest.raises(TooFewFrames):
        motion_features([np.zeros((8, 8), np.uint8)], 6.0)


def test_intensity_offset_invariance():
    tex = textured(w=240)
    frames = [tex[:, 3 * k:3 * k + 160].astype(np.int32) for k in range(5)]
    base = motion_features([f.astype(np.uint8) for f in frames], 6.0)
    darker = motion_features([(f - 40).astype(np.uint8) for f in frames], 6.0)
    assert darker.blur_degree == pytest.approx(base.blur_degree)
    assert darker.mv_magnitude_mean == base.mv_magnitude_mean
    assert darker.mv_magnitude_var == base.mv_magnitude_var
    assert darker.iframe_count == base.iframe_count


def test_blur_of_sharp_edges_exceeds_smooth():
    step = np.zeros((32, 32))
    step[:, 16:] = 255
    assert blur_degree(step) > blur_degree(gaussian_filter(step, 3)) > 0


# ---------------------------------------------------------------- geometry

def with_centers(manifest, centers):
    frames = tuple(replace(f, pose=CameraPose(np.eye(3), c)) for f, c in zip(manifest.frames, centers))
    return replace(manifest, frames=frames)


def test_static_camera_static_scene(tmp_path):
    from dyncog.scene import load_manifest
    from dyncog.synthetic import write_scripted_scene
    m = load_manifest(write_scripted_scene(tmp_path, n_frames=6, objects=[]))
    assert geometric_features(m) == GeometricFeatures()


def test_linear_camera_path_has_no_jerk(scripted):
    centers = np.outer(np.arange(30), [0.1, 0.0, 0.05])
    g = geometric_features(with_centers(scripted, centers))
    assert g.translational_jerk == pytest.approx(0.0, abs=1e-6)
    assert g.max_rotation_step == 0.0


def test_camera_jump_dominates_jerk(scripted):
    centers = np.zeros((30, 3))
    centers[15:, 0] = 0.5
    g = geometric_features(with_centers(scripted, centers))
    # third difference of a step of size J: J, 2J, J over three windows, zero elsewhere
    want = (0.5 + 1.0 + 0.5) * 6 ** 3 / 27
    assert g.translational_jerk == pytest.approx(want)


def test_panning_rotation_step(panning):
    g = geometric_features(panning)
    assert g.max_rotation_step == pytest.approx(1.0)
    assert g.angular_acceleration == pytest.approx(0.0, abs=1e-6)
    assert g.focal_stability == 0.0


# ---------------------------------------------------------------- coverage

def disk_mask(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def test_no_masks():
    assert dynamic_coverage([], 10, (40, 40)) == CoverageFeatures(0.0, 0.0)


def test_ten_percent_coverage():
    h, w = 40, 50
    masks = {}
    for t in range(8):
        m = np.zeros((h, w), bool)
        m[0:20, 2 * t:2 * t + 10] = True        # 200 px of 2000, moving 2 px/frame
        masks[t] = m
    cov = dynamic_coverage([Masklet(1, "box", h, w, masks)], 8)
    assert cov.moving_pixel_ratio == pytest.approx(0.10)


def test_static_objects_do_not_count():
    m = np.zeros((20, 20), bool)
    m[5:10, 5:10] = True
    assert dynamic_coverage([Masklet(1, "box", 20, 20, {t: m for t in range(5)})], 5) == CoverageFeatures()


def test_dispersion_orders_layouts():
    h, w = 100, 100

    def pair(c1, c2):
        out = []
        for oid, (cy, cx) in enumerate((c1, c2), 1):
            out.append(Masklet(oid, "o", h, w, {t: disk_mask(h, w, cy, cx + 2 * t, 5) for t in range(6)}))
        return dynamic_coverage(out, 6)

    apart = pair((10, 10), (85, 80))
    together = pair((50, 40), (52, 42))
    assert apart.spatial_dispersion > together.spatial_dispersion


# ---------------------------------------------------------------- layout

MOTION = MotionFeatures(1.0, 6.0, 0, 2.0, 0.5)


def test_default_layout_has_31_features():
    assert len(DEFAULT_LAYOUT) == 31
    assert len(assemble_features(MOTION, None, None, None)) == 31
    assert len(DEFAULT_LAYOUT.names) == len(set(DEFAULT_LAYOUT.names)) == 31


def test_full_layout_has_38_features():
    assert len(FULL_LAYOUT) == 38
    assert len(assemble_features(MOTION, GeometricFeatures(), CoverageFeatures(), None, FULL_LAYOUT)) == 38


def test_layout_mismatch():
    with pytest.raises(LayoutMismatch):
        assemble_features(MOTION, None, None, None, FULL_LAYOUT, n_features=31)


def test_layout_rejects_unknown_group():
    with pytest.raises(ValueError):
        FeatureLayout(("motion", "colour"))


def test_diagnostic_vector_bounds():
    assert len(DiagnosticVector.zeros().answers) == 26
    with pytest.raises(ValueError):
        DiagnosticVector((0.5,) * 25)
    with pytest.raises(ValueError):
        DiagnosticVector((1.5,) + (0.0,) * 25)


def test_question_bank_has_26_entries():
    qs = question_bank()
    assert len(qs) == 26 and all(q.endswith("?") for q in qs)
