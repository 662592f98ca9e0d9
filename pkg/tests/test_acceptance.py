"""Numbered acceptance criteria, one test each.

Every test attaches a short measurement summary; the terminal summary prints
one pass/fail line per criterion (see ``conftest.py``). Run just this suite
with ``pytest -m acceptance``.
"""

from __future__ import annotations

import itertools
import json
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from dyncog.cli import main
from dyncog.filtering.features import DEFAULT_LAYOUT, DiagnosticVector
from dyncog.filtering.forest import train_forest
from dyncog.filtering.gate import gate_decision, score_video
from dyncog.fusion import FusionMode, compose_sequence, overlay
from dyncog.kinematics import backproject, build_tracks, differentiate, ema_smooth, project
from dyncog.metrics import (
    ALL_SUBTASKS, LABELS, SUBTASK_LEVEL, Level, QAItem, accuracy, ablation_delta, boundary_accuracy_F,
    build_report, chance_frequency, chance_random, default_tolerance, load_ablation, load_grounding, load_qa,
    read_jsonl, recompute_report, region_similarity_J, round1,
)
from dyncog.pipeline import video_features
from dyncog.relations import DEFAULT_EPS_REL, Relation, classify_relation, closing_speed, infer_timeline
from dyncog.scene import CameraPose, Intrinsics, PoseConvention, decode_masks, decode_rgb, load_manifest, masklet_to_dict
from dyncog.synthetic import overtake_objects, planted_clip, write_clip_manifest
from dyncog.tcm import TcmConfig, build_map, serialize_tcm

from .oracles import backproject_matrix, distance_trend, f_by_enumeration, iou_by_enumeration, random_rotation

pytestmark = pytest.mark.acceptance

TMS_CONFIGS = ["".join(c) for n in range(4) for c in itertools.combinations("TMS", n)]


def note(record_property, text: str) -> None:
    record_property("detail", text)
    print(text)


def collapse(labels):
    return [k for k, _ in itertools.groupby(labels)]


# ---------------------------------------------------------------- 1

def _world_from_camera_matrix(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Invert a generic 4x4 homogeneous matrix when the pose is stored camera-from-world."""
    m = np.eye(4)
    m[:3, :3], m[:3, 3] = pose.rotation, pose.translation
    if pose.convention is PoseConvention.CAMERA_FROM_WORLD:
        m = np.linalg.inv(m)
    return m[:3, :3], m[:3, 3]


@pytest.mark.acceptance(1, "geometry oracle")
def test_geometry_oracle(record_property):
    rng = np.random.default_rng(2024)
    cases = []
    for _ in range(1000):
        w, h = int(rng.integers(64, 2049)), int(rng.integers(64, 2049))
        k = Intrinsics(rng.uniform(50, 3000), rng.uniform(50, 3000), rng.uniform(0, w), rng.uniform(0, h), w, h)
        pose = CameraPose(random_rotation(rng), rng.uniform(-50, 50, 3),
                          list(PoseConvention)[int(rng.integers(2))])
        cases.append((k, pose, (rng.uniform(0, w), rng.uniform(0, h)), rng.uniform(0.1, 100.0)))

    start = time.perf_counter()
    results = []
    for k, pose, pix, depth in cases:
        x = backproject(k, pose, pix, depth)
        results.append((x, *project(k, pose, x)))
    elapsed = time.perf_counter() - start

    worst_bp = worst_rt = 0.0
    for (k, pose, pix, depth), (x, uv, z) in zip(cases, results):
        want = backproject_matrix(k.matrix, *_world_from_camera_matrix(pose), pix[0], pix[1], depth)
        worst_bp = max(worst_bp, np.linalg.norm(x - want) / np.linalg.norm(want))
        worst_rt = max(worst_rt, np.linalg.norm(uv - pix) / np.linalg.norm(pix), abs(z - depth) / depth)
    note(record_property, f"max rel err backproject {worst_bp:.1e}, round trip {worst_rt:.1e}, {elapsed:.3f} s")
    assert worst_bp <= 1e-9
    assert worst_rt <= 1e-9
    assert elapsed < 1.0


# ---------------------------------------------------------------- 2

FPS = 6.0


def _noisy_velocity_errors(seed: int, n: int = 30) -> np.ndarray:
    """Relative velocity error per sample for object A of the scripted scene
    with uniform ±1 cm noise added to each centroid coordinate."""
    path = overtake_objects()[0].path
    t = np.arange(n) / FPS
    truth = np.array([path(s) for s in t])
    v_true = truth[1] - truth[0]
    v_true = v_true / np.linalg.norm(v_true)   # 1 m/s along +x
    noisy = truth + np.random.default_rng(seed).uniform(-0.01, 0.01, truth.shape)
    vel, _ = differentiate(t, ema_smooth(noisy))
    return np.linalg.norm(vel - v_true, axis=1) / np.linalg.norm(v_true)


@pytest.mark.acceptance(2, "kinematics under centroid noise")
def test_kinematics(record_property):
    # affine paths differentiate exactly on noiseless input
    rng = np.random.default_rng(7)
    affine_err = 0.0
    for _ in range(100):
        p0, v = rng.uniform(-10, 10, 3), rng.uniform(-3, 3, 3)
        t = np.cumsum(rng.uniform(0.05, 0.5, 20))
        vel, acc = differentiate(t, p0 + np.outer(t, v))
        affine_err = max(affine_err, np.abs(vel[1:] - v).max())

    errs = _noisy_velocity_errors(seed=0)[5:]
    out = int(np.count_nonzero(errs > 0.05))
    runs_ok = sum(bool(np.all(_noisy_velocity_errors(seed)[5:] <= 0.05)) for seed in range(200))
    note(record_property, f"affine max err {affine_err:.1e}; seed 0: worst {100 * errs.max():.1f}% with "
                          f"{out}/{len(errs)} samples over 5%; {runs_ok}/200 noise seeds fully within 5%")
    assert affine_err <= 1e-12
    assert np.all(errs <= 0.05)


# ---------------------------------------------------------------- 3

@pytest.mark.acceptance(3, "relation oracle")
def test_relation_oracle(record_property, timeline):
    rng = np.random.default_rng(3)
    n = 12
    t = np.arange(n) / FPS
    checked = mismatched = instant_mismatched = 0
    for _ in range(1000):
        starts, vels = rng.uniform(-10, 10, (2, 3)), rng.uniform(-2, 2, (2, 3))
        pos = [starts[k] + np.outer(t, vels[k]) for k in range(2)]
        vel = [differentiate(t, p)[0] for p in pos]
        dist = np.linalg.norm(pos[1] - pos[0], axis=1)
        for i in range(1, n - 1):
            c = closing_speed(pos[0][i], pos[1][i], vel[0][i], vel[1][i])
            if abs(c) <= 2 * DEFAULT_EPS_REL:
                continue
            checked += 1
            label = classify_relation(c)
            step = dist[i + 1] - dist[i]            # next observed step
            mismatched += label is not (Relation.APPROACHING if step < 0 else Relation.RECEDING)
            trend = distance_trend(pos[0][i], vel[0][i], pos[1][i], vel[1][i])
            instant_mismatched += label is not (Relation.APPROACHING if trend < 0 else Relation.RECEDING)

    sequence = collapse(lab for _, lab in timeline.debounced[(1, 2)])
    note(record_property, f"{mismatched}/{checked} disagree with the next observed step, "
                          f"{instant_mismatched}/{checked} with the instantaneous distance trend; "
                          f"overtake {'->'.join(r.value for r in sequence)}")
    assert instant_mismatched == 0
    assert sequence == [Relation.APPROACHING, Relation.PARALLEL, Relation.RECEDING]
    assert mismatched == 0


# ---------------------------------------------------------------- 4

@pytest.mark.acceptance(4, "cognitive map ablation mechanics")
def test_tcm_ablation(record_property, scripted, tracks, timeline, fixtures_dir):
    docs = {c: serialize_tcm(build_map(tracks, timeline, TcmConfig.from_flags(c))) for c in TMS_CONFIGS}
    lines = {c: set(d.splitlines()[1:]) for c, d in docs.items()}
    violations = [(a, b) for a, b in itertools.product(TMS_CONFIGS, TMS_CONFIGS)
                  if set(a) <= set(b) and not lines[a] <= lines[b]]

    again_tracks = build_tracks(scripted)
    again = serialize_tcm(build_map(again_tracks, infer_timeline(again_tracks), TcmConfig()))

    rows = {r.config: r for r in load_ablation(fixtures_dir / "tcm_ablation_qa.json")}
    full, base = round1(rows["w/ T + M + S"].average), round1(rows["w/o TCM"].average)
    delta = ablation_delta(list(rows.values()))
    note(record_property, f"{len(violations)} monotonicity violations; avg {full} - {base} = {delta}")
    assert not violations
    assert again.encode() == docs["TMS"].encode()
    assert (full, base, delta) == (68.3, 62.8, 5.5)


# ---------------------------------------------------------------- 5

def _random_pairs(rng, count: int):
    for _ in range(count):
        h, w = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        kind = rng.integers(3)
        if kind == 0:   # salt and pepper
            a, b = rng.random((h, w)) < rng.random(), rng.random((h, w)) < rng.random()
        else:           # blobs, the second one a perturbed copy
            yy, xx = np.mgrid[0:h, 0:w]
            c, r = rng.uniform(0, [h, w]), rng.uniform(1, 12)
            a = (yy - c[0]) ** 2 + (xx - c[1]) ** 2 <= r * r
            b = np.roll(a, tuple(rng.integers(-3, 4, 2)), axis=(0, 1)) ^ (rng.random((h, w)) < 0.05 * kind)
        yield a, b


def _adversarial_pairs():
    for h, w in ((1, 1), (1, 32), (32, 1), (7, 9), (32, 32)):
        empty, full = np.zeros((h, w), bool), np.ones((h, w), bool)
        yield empty, empty
        yield empty, full
        yield full, empty
        yield full, full
        box = np.zeros((h, w), bool)
        box[h // 4:max(h // 4 + 1, 3 * h // 4), w // 4:max(w // 4 + 1, 3 * w // 4)] = True
        for axis in (0, 1):
            yield box, np.roll(box, 1, axis=axis)
            yield np.roll(box, -1, axis=axis), box
        dot = np.zeros((h, w), bool)
        dot[h // 2, w // 2] = True
        yield dot, np.roll(dot, 1, axis=1)


@pytest.mark.acceptance(5, "segmentation metrics oracle")
def test_metrics_oracle(record_property):
    rng = np.random.default_rng(5)
    pairs = list(_random_pairs(rng, 240)) + list(_adversarial_pairs())
    start = time.perf_counter()
    got = []
    for a, b in pairs:
        tols = (0, default_tolerance(a.shape), 2.5)
        got.append((region_similarity_J(a, b), [boundary_accuracy_F(a, b, tol) for tol in tols], tols))
    elapsed = time.perf_counter() - start

    j_bad = f_bad = 0
    for (a, b), (j, fs, tols) in zip(pairs, got):
        j_bad += j != iou_by_enumeration(a, b)
        f_bad += sum(f != f_by_enumeration(a, b, tol) for f, tol in zip(fs, tols))

    levels = dict(zip(Level, (66.0, 71.1, 58.6)))
    rep = build_report(None, {lvl: [(lvl.value, v / 100, v / 100)] for lvl, v in levels.items()})
    avg = round1(100 * rep.grounding_average().JF)
    note(record_property, f"{len(pairs)} pairs x 3 tolerances: {j_bad} J and {f_bad} F mismatches; "
                          f"average J&F {avg}; {elapsed:.2f} s")
    assert j_bad == 0 and f_bad == 0
    assert avg == 65.2
    assert elapsed < 10.0


# ---------------------------------------------------------------- 6

def _items(answers) -> list[QAItem]:
    return [QAItem(f"q{i:05d}", "v", SUBTASK_LEVEL[ALL_SUBTASKS[i % len(ALL_SUBTASKS)]],
                   ALL_SUBTASKS[i % len(ALL_SUBTASKS)], "which?", ("w", "x", "y", "z"), ans)
            for i, ans in enumerate(answers)]


@pytest.mark.acceptance(6, "chance baselines")
def test_chance_baselines(record_property):
    rng = np.random.default_rng(6)
    items = _items(rng.choice(list(LABELS), 10_000))
    guesses = dict(zip((it.qa_id for it in items), rng.choice(list(LABELS), len(items))))
    score = accuracy(guesses, items).overall.percent

    worst_margin = np.inf
    for k in range(50):
        p = rng.dirichlet(np.full(4, 0.5))
        fixture = _items(rng.choice(list(LABELS), int(rng.integers(20, 400)), p=p))
        freq = chance_frequency(fixture)
        worst_margin = min(worst_margin, min(v - chance_random(fixture) for v in freq.values()))
    skewed = _items(["A"] * 40)
    worst_margin = min(worst_margin, min(v - 25.0 for v in chance_frequency(skewed).values()))
    note(record_property, f"uniform guessing {score:.2f}%, chance_random {chance_random(items)}; "
                          f"smallest frequency-over-random margin {worst_margin:.2f}")
    assert abs(score - 25.0) <= 2.0
    assert chance_random(items) == 25.0
    assert worst_margin >= 0.0


# ---------------------------------------------------------------- 7

@pytest.mark.acceptance(7, "dynamism filter on planted clips")
def test_filter_pipeline(record_property, tmp_path):
    start = time.perf_counter()
    rows = []
    for i in range(60):
        level = i % 6
        path = write_clip_manifest(planted_clip(level, seed=1000 + i), tmp_path / f"c{i:02d}", f"c{i:02d}")
        vec, geom = video_features(load_manifest(path), DEFAULT_LAYOUT, DiagnosticVector.zeros())
        rows.append((vec, geom, level))
    model = train_forest([(vec, level) for vec, _, level in rows[:40]], seed=0)
    test = rows[40:]
    scores = [score_video(model, vec) for vec, _, _ in test]
    rho = spearmanr([s.value for s in scores], [lvl for _, _, lvl in test]).statistic
    decisions = [(lvl, gate_decision(s, geom)) for s, (_, geom, lvl) in zip(scores, test)]
    elapsed = time.perf_counter() - start

    static = [d for lvl, d in decisions if lvl == 0]
    dynamic = [d for lvl, d in decisions if lvl == 5]
    note(record_property, f"Spearman {rho:.3f} on 20 held-out clips; "
                          f"{sum(not d.accept for d in static)}/{len(static)} static rejected, "
                          f"{sum(d.accept for d in dynamic)}/{len(dynamic)} dynamic accepted; "
                          f"{len(rows[0][0])} features; {elapsed:.1f} s")
    assert rho >= 0.8
    assert static and all(not d.accept and "low_dynamism" in d.reasons for d in static)
    assert dynamic and all(d.accept for d in dynamic)
    assert all(len(vec) == 31 for vec, _, _ in rows)
    assert elapsed < 60.0


# ---------------------------------------------------------------- 8

@pytest.mark.acceptance(8, "mask fusion")
def test_mask_fusion(record_property, scripted):
    identity = palette = background = True
    for entry in scripted.frames:
        rgb = decode_rgb(entry.rgb_ref)
        masks = decode_masks(entry.mask_ref, scripted.categories)
        fg = np.zeros(rgb.shape[:2], bool)
        for m in masks:
            fg |= m.pixels
        identity &= np.array_equal(overlay(rgb, masks, 0.0), rgb)
        full = overlay(rgb, masks, 1.0)
        for m in sorted(masks, key=lambda m: m.object_id, reverse=True):
            fg_only = m.pixels & ~np.any([o.pixels for o in masks if o.object_id < m.object_id] or [False], axis=0)
            palette &= bool(np.all(full[fg_only] == FusionMode().color(m.object_id)))
        half = overlay(rgb, masks, 0.5)
        background &= np.array_equal(half[~fg], rgb[~fg]) and np.array_equal(full[~fg], rgb[~fg])

    seq = compose_sequence(scripted, FusionMode())
    raws_ok = all(item.kind == "raw" and np.array_equal(item.image, decode_rgb(scripted.frames[item.source_frame].rgb_ref))
                  and item.source_frame == item.index // 2 for item in seq[0::2])
    overlays_ok = all(item.kind == "overlay" for item in seq[1::2])
    note(record_property, f"identity {identity}, palette {palette}, background {background}; "
                          f"{len(seq)} items for {len(scripted)} frames")
    assert identity and palette and background
    assert len(seq) == 2 * len(scripted) and raws_ok and overlays_ok


# ---------------------------------------------------------------- 9

@pytest.mark.acceptance(9, "end-to-end with the mock gateway")
def test_end_to_end(record_property, tmp_path, mock_replies):
    start = time.perf_counter()
    scene = tmp_path / "scene"
    assert main(["synth", "scripted", "--out", str(scene), "--yaw-rate", "6"]) == 0
    manifest = scene / "manifest.json"
    assert main(["synth", "planted", "--out", str(tmp_path / "train")]) == 0
    assert main(["filter", str(manifest), "--out", str(tmp_path / "filter"),
                 "--train", str(tmp_path / "train" / "train_table.csv")]) == 0
    decision = read_jsonl(tmp_path / "filter" / "decisions.jsonl")[0]
    assert decision["accept"] is True, decision

    tcm = tmp_path / "scene.tcm"
    assert main(["tcm", str(manifest), "--out", str(tcm), "--T", "--M", "--S"]) == 0
    gen = tmp_path / "gen"
    mock = ["--transport", "mock", "--fixture", str(mock_replies)]
    assert main(["qa-gen", str(manifest), "--tcm", str(tcm), "--out", str(gen), *mock]) == 0
    qa, grounding = load_qa(gen / "qa.jsonl"), load_grounding(gen / "grounding.jsonl")
    assert qa and grounding

    preds = tmp_path / "answers.jsonl"
    assert main(["answer", str(gen / "qa.jsonl"), "--manifest", str(manifest), "--out", str(preds), *mock]) == 0
    # grounding predictions: the gold masklet for every other item, nothing for the rest
    gpreds = tmp_path / "masks.jsonl"
    gpreds.write_text("".join(json.dumps({"item_id": it.item_id, "masklet": masklet_to_dict(it.gold) if k % 2 == 0
                                          else None}) + "\n" for k, it in enumerate(grounding)))
    assert main(["eval", "--qa", str(gen / "qa.jsonl"), "--predictions", str(preds),
                 "--grounding", str(gen / "grounding.jsonl"), "--grounding-predictions", str(gpreds),
                 "--out", str(tmp_path / "report")]) == 0
    elapsed = time.perf_counter() - start

    doc = json.loads((tmp_path / "report" / "report.json").read_text())
    again = recompute_report(doc)
    stored = {
        "qa": {"subtasks": {s: v["accuracy"] for s, v in doc["qa"]["subtasks"].items()},
               "levels": {k: v["accuracy"] for k, v in doc["qa"]["levels"].items()},
               "overall": doc["qa"]["overall"]["accuracy"]},
        "grounding": {"levels": {k: {m: v[m] for m in ("J", "F", "JF")} for k, v in doc["grounding"]["levels"].items()},
                      "average": doc["grounding"]["average"]},
    }
    note(record_property, f"{len(qa)} QA + {len(grounding)} grounding items; overall "
                          f"{doc['qa']['overall']['accuracy']:.1f}%, J&F {100 * doc['grounding']['average']['JF']:.1f}; "
                          f"{elapsed:.1f} s")
    assert again == stored
    assert elapsed < 30.0
