"""Per-video orchestration shared by the command line and the test-suite."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .filtering.features import (
    DEFAULT_LAYOUT,
    DiagnosticVector,
    FeatureLayout,
    assemble_features,
    geometric_features,
    manifest_coverage,
    manifest_motion,
    question_bank,
)
from .filtering.forest import ForestModel
from .filtering.gate import GateDecision, GateThresholds, gate_decision, score_video
from .gateway.generate import ask_diagnostics
from .gateway.transport import ModelEndpoint, Transport
from .kinematics import DEFAULT_ALPHA, build_tracks
from .relations import DEFAULT_EPS_REL, DEFAULT_MIN_RUN, infer_timeline
from .scene import VideoManifest
from .tcm import TcmConfig, build_map, serialize_tcm

logger = logging.getLogger(__name__)


def derive_seed(seed: int, name: str) -> int:
    """Sub-seed for one stochastic component: the first 4 bytes of
    blake2b("<seed>:<name>"), little endian."""
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def tcm_document(manifest: VideoManifest, config: TcmConfig = TcmConfig(), alpha: float = DEFAULT_ALPHA,
                 eps_rel: float = DEFAULT_EPS_REL, min_run: int = DEFAULT_MIN_RUN) -> str:
    tracks = build_tracks(manifest, alpha)
    timeline = infer_timeline(tracks, eps_rel, min_run)
    return serialize_tcm(build_map(tracks, timeline, config))


@dataclass
class FilterRecord:
    video_id: str
    vector: np.ndarray
    score: float
    decision: GateDecision


def diagnostics_for(manifest: VideoManifest, endpoint: ModelEndpoint | None,
                    transport: Transport | None = None, max_frames: int = 8) -> DiagnosticVector:
    if endpoint is None:
        return DiagnosticVector.zeros()
    n = len(manifest)
    idx = np.unique(np.linspace(0, n - 1, min(n, max_frames)).round().astype(int))
    refs = [str(manifest.frames[i].rgb_ref) for i in idx]
    return DiagnosticVector(tuple(ask_diagnostics(endpoint, refs, question_bank(), manifest.video_id, transport)))


def vlm_verdict(manifest: VideoManifest, endpoint: ModelEndpoint | None, transport: Transport | None) -> bool | None:
    """Semantic check through the model; None when no endpoint is configured
    or the fixture has no verdict for the video."""
    if endpoint is None or transport is None:
        return None
    payload = {"model": endpoint.model, "temperature": 0,
               "messages": [{"role": "user", "content": [{"type": "text", "text":
                             "Is this video coherent, realistic and does its motion look valid? Reply pass or fail."}]}],
               "metadata": {"kind": "vlm_verdict", "video_id": manifest.video_id}}
    try:
        reply = transport.send(payload, manifest.video_id)
    except Exception:  # a missing verdict leaves the gate to the quantitative checks
        logger.info("%s: no VLM verdict available", manifest.video_id)
        return None
    return reply.strip().lower().startswith("pass")


def video_features(manifest: VideoManifest, layout: FeatureLayout = DEFAULT_LAYOUT,
                   diagnostic: DiagnosticVector | None = None):
    motion = manifest_motion(manifest)
    geom = geometric_features(manifest)
    cov = manifest_coverage(manifest)
    return assemble_features(motion, geom, cov, diagnostic, layout), geom


def filter_video(manifest: VideoManifest, model: ForestModel, layout: FeatureLayout = DEFAULT_LAYOUT,
                 thresholds: GateThresholds = GateThresholds(), endpoint: ModelEndpoint | None = None,
                 transport: Transport | None = None) -> FilterRecord:
    if endpoint is not None and transport is None:
        transport = endpoint.connect()
    diag = diagnostics_for(manifest, endpoint, transport)
    vec, geom = video_features(manifest, layout, diag)
    score = score_video(model, vec)
    verdict = vlm_verdict(manifest, endpoint, transport)
    return FilterRecord(manifest.video_id, vec, score.value, gate_decision(score, geom, verdict, thresholds))


def write_feature_table(path: str | Path, layout: FeatureLayout, rows: Sequence[tuple[str, np.ndarray]],
                        labels: Sequence[float] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", *layout.names] + (["label"] if labels is not None else []))
        for k, (vid, vec) in enumerate(rows):
            w.writerow([vid, *(repr(float(v)) for v in vec)] + ([repr(float(labels[k]))] if labels is not None else []))


def read_feature_table(path: str | Path) -> tuple[list[str], list[str], np.ndarray, np.ndarray | None]:
    """Returns (video ids, feature names, X, labels or None)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    has_label = header[-1] == "label"
    names = header[1:-1] if has_label else header[1:]
    ids = [r[0] for r in body]
    X = np.array([[float(v) for v in r[1:1 + len(names)]] for r in body], dtype=float).reshape(len(body), len(names))
    y = np.array([float(r[-1]) for r in body]) if has_label else None
    return ids, names, X, y
