"""Shared fixtures: rendered scripted scenes and a toy dynamism model."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from dyncog.filtering.features import DEFAULT_LAYOUT, DiagnosticVector
from dyncog.filtering.forest import train_forest
from dyncog.kinematics import build_tracks
from dyncog.pipeline import video_features
from dyncog.relations import infer_timeline
from dyncog.scene import load_manifest
from dyncog.synthetic import planted_clip, write_clip_manifest, write_scripted_scene

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criteria")
    config._acceptance_lines = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Record one pass/fail line per acceptance criterion, with the details
    the test attached through ``record_property("detail", ...)``."""
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        number, title = marker.args[0], marker.args[1]
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        status = "PASS" if rep.passed else "FAIL"
        item.config._acceptance_lines[number] = f"criterion {number} {status}: {title}" + (
            f" ({detail})" if detail else "")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mock_replies() -> Path:
    return FIXTURES / "mock_replies.json"


@pytest.fixture(scope="session")
def scripted_path(tmp_path_factory) -> Path:
    """Overtake scene, static camera: A moves +x at 1 m/s past static B."""
    return write_scripted_scene(tmp_path_factory.mktemp("scripted"))


@pytest.fixture(scope="session")
def scripted(scripted_path):
    return load_manifest(scripted_path)


@pytest.fixture(scope="session")
def panning_path(tmp_path_factory) -> Path:
    """Same scene with the camera panning at 6 deg/s."""
    return write_scripted_scene(tmp_path_factory.mktemp("panning"), yaw_rate_deg=6.0, video_id="panning")


@pytest.fixture(scope="session")
def panning(panning_path):
    return load_manifest(panning_path)


@pytest.fixture(scope="session")
def tracks(scripted):
    return build_tracks(scripted)


@pytest.fixture(scope="session")
def timeline(tracks):
    return infer_timeline(tracks)


@pytest.fixture(scope="session")
def planted_set(tmp_path_factory):
    """60 planted clips (10 per level) as feature rows: (video_id, vector, level, manifest path)."""
    root = tmp_path_factory.mktemp("planted")
    out = []
    for i in range(60):
        level = i % 6
        clip = planted_clip(level, seed=1000 + i)
        path = write_clip_manifest(clip, root / f"clip{i:02d}", f"clip{i:02d}")
        vec, _ = video_features(load_manifest(path), DEFAULT_LAYOUT, DiagnosticVector.zeros())
        out.append((f"clip{i:02d}", vec, level, path))
    return out


@pytest.fixture(scope="session")
def toy_model(planted_set):
    X = np.array([r[1] for r in planted_set[:40]])
    y = np.array([r[2] for r in planted_set[:40]], dtype=float)
    return train_forest(X=X, y=y, trees=50, max_depth=8, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

