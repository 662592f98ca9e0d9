"""Scoring and the accept/reject gate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LayoutMismatch
from .features import GeometricFeatures
from .forest import ForestModel

LOW_DYNAMISM = "low_dynamism"
FOCAL_INSTABILITY = "focal_instability"
POSE_JUMP = "pose_jump"
VLM_REJECT = "vlm_reject"


@dataclass(frozen=True)
class DynamismScore:
    value: float
    components: np.ndarray = field(repr=False, compare=False, default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not 0.0 <= self.value <= 5.0:
            raise ValueError("dynamism score must lie in [0, 5]")


@dataclass(frozen=True)
class GateThresholds:
    score: float = 3.0
    focal_stability: float = 0.02
    rotation_step_deg: float = 15.0


@dataclass(frozen=True)
class GateDecision:
    accept: bool
    reasons: tuple[str, ...] = ()
    score: float | None = None

    def to_dict(self) -> dict:
        return {"accept": self.accept, "reasons": list(self.reasons), "score": self.score}


def score_video(model: ForestModel, vector) -> DynamismScore:
    v = np.asarray(vector, dtype=float).ravel()
    if len(v) != model.n_features:
        raise LayoutMismatch(f"model expects {model.n_features} features, got {len(v)}")
    return DynamismScore(float(model.predict(v[None, :])[0]), v)


def gate_decision(score: DynamismScore | float, geometric: GeometricFeatures | None = None,
                  vlm_verdict: bool | None = None, thresholds: GateThresholds = GateThresholds()) -> GateDecision:
    """Accept iff the score clears the threshold, geometry is stable and the
    optional VLM verdict is not a fail. All failing checks are reported."""
    value = score.value if isinstance(score, DynamismScore) else float(score)
    reasons = []
    if value < thresholds.score:
        reasons.append(LOW_DYNAMISM)
    if geometric is not None:
        if geometric.focal_stability > thresholds.focal_stability:
            reasons.append(FOCAL_INSTABILITY)
        if geometric.max_rotation_step > thresholds.rotation_step_deg:
            reasons.append(POSE_JUMP)
    if vlm_verdict is False:
        reasons.append(VLM_REJECT)
    return GateDecision(not reasons, tuple(reasons), value)
