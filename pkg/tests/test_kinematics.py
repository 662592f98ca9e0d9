import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncog.errors import AlphaOutOfRange, NonPositiveDepth, NoValidDepth
from dyncog.kinematics import backproject, build_tracks, differentiate, ema_smooth, extract_centroid, project
from dyncog.scene import CameraPose, DepthMap, Intrinsics, load_manifest
from dyncog.synthetic import overtake_objects, write_scripted_scene

from .oracles import backproject_matrix, random_rotation


# ---------------------------------------------------------------- centroids

def test_centroid_of_2x2_block():
    mask = np.zeros((20, 20), bool)
    mask[10:12, 10:12] = True
    pixel, d = extract_centroid(mask, DepthMap.from_array(np.full((20, 20), 3.0)))
    np.testing.assert_array_equal(pixel, [10.5, 10.5])
    assert d == 3.0


def test_centroid_depth_ignores_one_outlier():
    mask = np.zeros((4, 4), bool)
    mask[0, :2] = mask[1, :2] = True
    depth = np.ones((4, 4))
    depth[1, 1] = 100.0
    assert extract_centroid(mask, DepthMap.from_array(depth))[1] == 1.0


def test_centroid_without_valid_depth():
    mask = np.ones((3, 3), bool)
    with pytest.raises(NoValidDepth):
        extract_centroid(mask, DepthMap.from_array(np.zeros((3, 3))))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(3, 40), data=st.data())
def test_median_depth_is_robust(n, data):
    depth = np.full(n, 4.0)
    k = (n - 1) // 2   # strictly fewer than half
    bad = data.draw(st.lists(st.floats(0.01, 1e4), min_size=k, max_size=k))
    depth[:k] = bad
    mask = np.ones((1, n), bool)
    assert extract_centroid(mask, DepthMap.from_array(depth[None, :]))[1] == 4.0


# ---------------------------------------------------------------- back-projection

def test_backproject_identity_unit_camera():
    k = Intrinsics(1.0, 1.0, 0.0, 0.0, 2, 2)
    np.testing.assert_array_equal(backproject(k, CameraPose.identity(), (0, 0), 2.0), [0, 0, 2])


def test_backproject_off_axis_pixel():
    k = Intrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
    got = backproject(k, CameraPose.identity(), (420, 240), 5.0)
    want = backproject_matrix(k.matrix, np.eye(3), np.zeros(3), 420, 240, 5.0)
    np.testing.assert_allclose(got, want, rtol=1e-12)
    np.testing.assert_allclose(got, [1.0, 0.0, 5.0], rtol=1e-12)


def test_backproject_translated_camera():
    k = Intrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
    pose = CameraPose(np.eye(3), np.array([0.0, 0.0, -5.0]))
    got = backproject(k, pose, (420, 240), 5.0)
    np.testing.assert_allclose(got, backproject_matrix(k.matrix, np.eye(3), np.array([0, 0, -5.0]), 420, 240, 5))
    np.testing.assert_allclose(got, [1.0, 0.0, 0.0], atol=1e-12)


def test_backproject_rejects_non_positive_depth():
    k = Intrinsics(1.0, 1.0, 0.0, 0.0, 2, 2)
    with pytest.raises(NonPositiveDepth):
        backproject(k, CameraPose.identity(), (0, 0), 0.0)


def _random_camera(rng):
    w, h = int(rng.integers(64, 2000)), int(rng.integers(64, 2000))
    k = Intrinsics(float(rng.uniform(50, 3000)), float(rng.uniform(50, 3000)),
                   float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1)), w, h)
    pose = CameraPose(random_rotation(rng), rng.uniform(-50, 50, 3))
    return k, pose


def test_projection_inverts_backprojection(rng):
    for _ in range(200):
        k, pose = _random_camera(rng)
        u = rng.uniform(0, k.width), rng.uniform(0, k.height)
        d = float(rng.uniform(0.1, 80))
        pix, z = project(k, pose, backproject(k, pose, u, d))
        np.testing.assert_allclose(pix, u, rtol=1e-9)
        assert z == pytest.approx(d, rel=1e-9)


def test_rigid_transform_equivariance(rng):
    for _ in range(100):
        k, pose = _random_camera(rng)
        g_r, g_t = random_rotation(rng), rng.uniform(-10, 10, 3)
        r, t = pose.world_from_camera()
        moved = CameraPose(g_r @ r, g_r @ t + g_t)
        u, d = (rng.uniform(0, k.width), rng.uniform(0, k.height)), float(rng.uniform(0.1, 50))
        p = backproject(k, pose, u, d)
        np.testing.assert_allclose(backproject(k, moved, u, d), g_r @ p + g_t, rtol=1e-9, atol=1e-9)


# ---------------------------------------------------------------- smoothing

def test_ema_alpha_one_is_identity():
    x = np.array([3.0, -1.0, 7.5])
    np.testing.assert_array_equal(ema_smooth(x, 1.0), x)


def test_ema_hand_recursion():
    np.testing.assert_allclose(ema_smooth([0.0, 1.0, 1.0], 0.5), [0.0, 0.5, 0.75])


def test_ema_rejects_bad_alpha():
    for a in (0.0, 1.5, -0.1):
        with pytest.raises(AlphaOutOfRange):
            ema_smooth([1.0, 2.0], a)


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(0.01, 1.0), c=st.floats(-1e3, 1e3), n=st.integers(1, 30))
def test_ema_constant_fixed_point(alpha, c, n):
    np.testing.assert_array_equal(ema_smooth(np.full(n, c), alpha), np.full(n, c))


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(0.01, 1.0), xs=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
def test_ema_stays_in_hull(alpha, xs):
    s = ema_smooth(xs, alpha)
    assert s.min() >= min(xs) - 1e-9 and s.max() <= max(xs) + 1e-9


# ---------------------------------------------------------------- differences

def test_static_positions_have_zero_velocity():
    vel, acc = differentiate([0, 1, 2, 3], np.ones((4, 3)))
    np.testing.assert_array_equal(vel[1:], 0)
    np.testing.assert_array_equal(acc[2:], 0)
    assert np.isnan(vel[0]).all() and np.isnan(acc[:2]).all()


def test_constant_step_at_six_fps():
    t = np.arange(3) / 6
    p = np.array([[0.0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]])
    vel, acc = differentiate(t, p)
    np.testing.assert_allclose(vel[1:], [[3, 0, 0], [3, 0, 0]])
    np.testing.assert_allclose(acc[2], [0, 0, 0])


def test_difference_across_a_gap_uses_elapsed_time():
    vel, _ = differentiate([0 / 6, 3 / 6], [[0.0, 0, 0], [1.5, 0, 0]])
    np.testing.assert_allclose(vel[1], [3, 0, 0])


def test_affine_path_is_exact(rng):
    t = np.sort(rng.choice(200, 25, replace=False)) / 6.0
    v = rng.uniform(-3, 3, 3)
    p = rng.uniform(-10, 10, 3) + np.outer(t, v)
    vel, acc = differentiate(t, p)
    assert np.abs(vel[1:] - v).max() <= 1e-12 * max(1.0, np.abs(p).max() * 6)
    assert np.abs(acc[2:]).max() <= 1e-9


def test_non_increasing_times_rejected():
    with pytest.raises(ValueError):
        differentiate([0.0, 0.0], np.zeros((2, 3)))


# ---------------------------------------------------------------- tracks from video

def test_scripted_velocities(tracks):
    a, b = tracks[1], tracks[2]
    for t in range(5, 30):
        np.testing.assert_allclose(a.at(t).velocity, [1, 0, 0], atol=0.05)
    for t in range(1, 30):
        assert b.speed(t) < 0.05
    assert a.at(0).velocity is None
    assert a.at(1).acceleration is None


def test_track_gap_semantics(tmp_path):
    m = load_manifest(write_scripted_scene(tmp_path, absent={1: [10, 11, 12]}))
    a = build_tracks(m)[1]
    assert len(a) == 30
    assert [a.is_observed(t) for t in (9, 10, 11, 12, 13)] == [True, False, False, False, True]
    assert a.at(11).position is None
    # the first sample after the gap has a velocity (over 4 frames of elapsed
    # time, damped by the smoothing lag); a few frames later it has recovered
    assert a.at(13).velocity is not None and a.at(13).velocity[0] > 0.5
    np.testing.assert_allclose(a.at(18).velocity, [1, 0, 0], atol=0.05)


def test_single_sighting_track(tmp_path):
    m = load_manifest(write_scripted_scene(tmp_path, n_frames=6, absent={1: range(1, 6)}))
    a = build_tracks(m)[1]
    assert len(a) == 1
    assert a.at(0).velocity is None


def test_record_units(tracks):
    rec = tracks[1].to_record()
    assert rec["units"]["velocity"] == "m/s"
    assert rec["samples"][0]["velocity"] is None
    assert len(rec["samples"]) == 30


def test_objects_are_reconstructed_where_placed(tracks):
    objs = {o.object_id: o for o in overtake_objects()}
    for oid in (1, 2):
        raw = tracks[oid].raw_position
        for t in (0, 15, 29):
            # the centroid sits on the sphere's front surface, so z is off by at most the radius
            np.testing.assert_allclose(raw[t], objs[oid].path(t / 6), atol=0.55)
