"""Dynamism scoring and filtering."""

from .features import (
    DEFAULT_LAYOUT, FULL_LAYOUT, CoverageFeatures, DiagnosticVector, FeatureLayout, GeometricFeatures,
    MotionFeatures, assemble_features, dynamic_coverage, geometric_features, motion_features,
)
from .forest import ForestModel, train_forest
from .gate import DynamismScore, GateDecision, GateThresholds, gate_decision, score_video

__all__ = [
    "DEFAULT_LAYOUT", "FULL_LAYOUT", "CoverageFeatures", "DiagnosticVector", "FeatureLayout",
    "GeometricFeatures", "MotionFeatures", "assemble_features", "dynamic_coverage", "geometric_features",
    "motion_features", "ForestModel", "train_forest", "DynamismScore", "GateDecision", "GateThresholds",
    "gate_decision", "score_video",
]
