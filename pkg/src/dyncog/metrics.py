"""VQA accuracy, chance baselines and J / F / J&F grounding metrics.

Aggregation rules:

* QA accuracy is pooled over items: a level's accuracy is
  100 * correct / total over all items of its three subtasks, and the overall
  figure pools every item. Reports keep the integer counts so each aggregate
  can be recomputed exactly.
* Grounding J, F and J&F are averaged over items within a level, and the
  overall figure is the plain mean of the level values.

Boundaries are 8-connected: a foreground pixel is on the boundary when one of
its eight in-image neighbours is background. Pixels on the image border are not
boundary by themselves. A boundary pixel matches when a pixel of the other
boundary lies within Euclidean distance ``tolerance``.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from .errors import DimensionMismatch, NoOverlappingFrames, SchemaViolation, UnknownQaId
from .scene import InstanceMask, Masklet, masklet_from_dict, masklet_to_dict

logger = logging.getLogger(__name__)

LABELS = "ABCD"
TOLERANCE_FRACTION = 0.008


class Level(str, Enum):
    INTER_OBJECT = "inter_object"
    OBJECT_SCENE = "object_scene"
    CAMERA_OBJECT = "camera_object"

    @property
    def title(self) -> str:
        return {"inter_object": "Inter-Object", "object_scene": "Object-Scene",
                "camera_object": "Camera-Object"}[self.value]


SUBTASKS: dict[Level, tuple[str, str, str]] = {
    Level.INTER_OBJECT: ("Act. & Obj. Desc.", "Move. & Temp. Dyn.", "Spatial Rel. & Change"),
    Level.OBJECT_SCENE: ("Mov. Patterns & Traj.", "Spatial Rel. & Comp.", "Scene Focus & Dyn."),
    Level.CAMERA_OBJECT: ("Cam. Motion & Orient.", "Cam-Obj. Interaction", "Temp. & Visual Change"),
}
SUBTASK_LEVEL = {s: lvl for lvl, subs in SUBTASKS.items() for s in subs}
ALL_SUBTASKS = [s for lvl in Level for s in SUBTASKS[lvl]]


def round1(x: float) -> float:
    """Round half up to one decimal, as tables are printed."""
    return float(Decimal(repr(float(x))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# items


@dataclass(frozen=True)
class QAItem:
    """Multiple-choice item. Options are labelled A, B, ... in order.

    Generated items always carry four options; two or three are accepted here
    so that mixed-format banks can be scored.
    """

    qa_id: str
    video_id: str
    level: Level
    subtask: str
    question: str
    options: tuple[str, ...]
    answer: str

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "options", tuple(self.options))
        if not 2 <= len(self.options) <= 4:
            raise SchemaViolation(f"{self.qa_id}: need 2 to 4 options, got {len(self.options)}")
        if len(set(self.options)) != len(self.options):
            raise SchemaViolation(f"{self.qa_id}: duplicate option texts")
        if self.answer not in self.labels:
            raise SchemaViolation(f"{self.qa_id}: answer {self.answer!r} not among {self.labels}")
        if SUBTASK_LEVEL.get(self.subtask) is not self.level:
            raise SchemaViolation(f"{self.qa_id}: subtask {self.subtask!r} does not belong to {self.level.value}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(LABELS[: len(self.options)])

    def to_dict(self) -> dict:
        return {"qa_id": self.qa_id, "video_id": self.video_id, "level": self.level.value,
                "subtask": self.subtask, "question": self.question,
                "options": dict(zip(self.labels, self.options)), "answer": self.answer}

    @classmethod
    def from_dict(cls, d: Mapping) -> "QAItem":
        try:
            opts = d["options"]
            if isinstance(opts, Mapping):
                keys = sorted(opts)
                if "".join(keys) != LABELS[: len(keys)]:
                    raise SchemaViolation(f"option labels must run A, B, ...: {keys}")
                opts = [opts[k] for k in keys]
            return cls(str(d["qa_id"]), str(d["video_id"]), Level(d["level"]), d["subtask"],
                       d["question"], tuple(opts), d["answer"])
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, SchemaViolation):
                raise
            raise SchemaViolation(f"bad QA record: {exc}") from exc


@dataclass(frozen=True)
class GroundingItem:
    item_id: str
    video_id: str
    level: Level
    referring_text: str
    gold: Masklet
    object_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        if not self.gold.present_frames():
            raise SchemaViolation(f"{self.item_id}: gold masklet is empty on every frame")

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "video_id": self.video_id, "level": self.level.value,
                "referring_text": self.referring_text, "object_id": self.object_id,
                "gold": masklet_to_dict(self.gold)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundingItem":
        try:
            return cls(str(d["item_id"]), str(d["video_id"]), Level(d["level"]), d["referring_text"],
                       masklet_from_dict(d["gold"]), d.get("object_id"))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"bad grounding record: {exc}") from exc


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"{path}:{n}: {exc}") from exc
    return out


def load_qa(path: str | Path) -> list[QAItem]:
    return [QAItem.from_dict(d) for d in read_jsonl(path)]


def load_grounding(path: str | Path) -> list[GroundingItem]:
    return [GroundingItem.from_dict(d) for d in read_jsonl(path)]


# ---------------------------------------------------------------------------
# QA scoring

_LETTER = re.compile(r"(?<![A-Za-z])([A-D])(?![A-Za-z])")


def parse_reply(reply: str | None, item: QAItem) -> str | None:
    """Map a free-text reply to a label: first standalone letter among the
    item's labels, else an exact (case-insensitive) option text, else None."""
    if reply is None:
        return None
    text = reply.strip()
    for m in _LETTER.finditer(text):
        if m.group(1) in item.labels:
            return m.group(1)
    norm = text.rstrip(".").strip().lower()
    for label, opt in zip(item.labels, item.options):
        if norm == opt.strip().lower():
            return label
    return None


@dataclass(frozen=True)
class Tally:
    correct: int = 0
    total: int = 0

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(self.correct + other.correct, self.total + other.total)

    @property
    def percent(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0


@dataclass(frozen=True)
class AccuracyResult:
    subtasks: dict[str, Tally]

    def level(self, level: Level) -> Tally:
        return sum((self.subtasks[s] for s in SUBTASKS[Level(level)] if s in self.subtasks), Tally())

    @property
    def overall(self) -> Tally:
        return sum(self.subtasks.values(), Tally())

    def levels(self) -> dict[Level, Tally]:
        return {lvl: self.level(lvl) for lvl in Level if self.level(lvl).total}


def accuracy(predictions: Mapping[str, str | None], gold: Sequence[QAItem]) -> AccuracyResult:
    """Percent correct per subtask; missing or unparseable predictions are wrong.

    Prediction values may be labels or raw replies (mapped via ``parse_reply``).
    """
    by_id = {it.qa_id: it for it in gold}
    unknown = sorted(set(predictions) - set(by_id))
    if unknown:
        raise UnknownQaId(f"predictions for unknown qa ids: {unknown[:5]}")
    tallies: dict[str, list[int]] = {}
    for it in gold:
        label = parse_reply(predictions.get(it.qa_id), it)
        t = tallies.setdefault(it.subtask, [0, 0])
        t[0] += int(label == it.answer)
        t[1] += 1
    order = {s: i for i, s in enumerate(ALL_SUBTASKS)}
    return AccuracyResult({s: Tally(*tallies[s]) for s in sorted(tallies, key=order.get)})


def chance_random(items: Sequence[QAItem]) -> float:
    if not items:
        raise ValueError("no items")
    return math.fsum(100.0 / len(it.options) for it in items) / len(items)


def chance_frequency(items: Sequence[QAItem]) -> dict[str, float]:
    """Accuracy of always answering each subtask's most frequent gold label
    (ties go to the earliest label)."""
    groups: dict[str, list[str]] = defaultdict(list)
    for it in items:
        groups[it.subtask].append(it.answer)
    out = {}
    for sub, answers in groups.items():
        counts = Counter(answers)
        top = max(sorted(counts), key=lambda lab: counts[lab])
        out[sub] = 100.0 * counts[top] / len(answers)
    return out


def frequency_predictions(items: Sequence[QAItem]) -> dict[str, str]:
    groups: dict[str, list[str]] = defaultdict(list)
    for it in items:
        groups[it.subtask].append(it.answer)
    modal = {}
    for sub, answers in groups.items():
        counts = Counter(answers)
        modal[sub] = max(sorted(counts), key=lambda lab: counts[lab])
    return {it.qa_id: modal[it.subtask] for it in items}


# ---------------------------------------------------------------------------
# J and F


def _pixels(m) -> np.ndarray:
    return m.pixels if isinstance(m, InstanceMask) else np.asarray(m, dtype=bool)


def region_similarity_J(pred, gold) -> float:
    p, g = _pixels(pred), _pixels(gold)
    if p.shape != g.shape:
        raise DimensionMismatch(f"{p.shape} vs {g.shape}")
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


_EIGHT = np.ones((3, 3), dtype=bool)


def boundary(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    return m & ~binary_erosion(m, structure=_EIGHT, border_value=1)


def disk(radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return yy * yy + xx * xx <= radius * radius


def default_tolerance(shape: tuple[int, int]) -> int:
    return max(1, math.ceil(TOLERANCE_FRACTION * math.hypot(*shape)))


def _matched(src: np.ndarray, dst: np.ndarray, tol: float) -> int:
    if tol < 1:
        return int(np.count_nonzero(src & dst))
    near = binary_dilation(dst, structure=disk(tol))
    return int(np.count_nonzero(src & near))


def boundary_accuracy_F(pred, gold, tolerance_px: float | None = None) -> float:
    p, g = _pixels(pred), _pixels(gold)
    if p.shape != g.shape:
        raise DimensionMismatch(f"{p.shape} vs {g.shape}")
    if tolerance_px is None:
        tolerance_px = default_tolerance(p.shape)
    if tolerance_px < 0:
        raise ValueError("tolerance must be non-negative")
    bp, bg = boundary(p), boundary(g)
    np_, ng = np.count_nonzero(bp), np.count_nonzero(bg)
    if np_ == 0 and ng == 0:
        return 1.0
    if np_ == 0 or ng == 0:
        return 0.0
    precision = _matched(bp, bg, tolerance_px) / np_
    recall = _matched(bg, bp, tolerance_px) / ng
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class JF:
    J: float
    F: float

    @property
    def JF(self) -> float:
        return (self.J + self.F) / 2

    def __iter__(self):
        return iter((self.J, self.F, self.JF))


def mean(values: Iterable[float]) -> float:
    vals = list(values)
    return math.fsum(vals) / len(vals) if vals else 0.0


def jf_masklet(pred: Masklet | None, gold: Masklet, tolerance_px: float | None = None) -> JF:
    """J and F averaged over the frames where the gold object is present."""
    frames = gold.present_frames()
    if not frames:
        raise NoOverlappingFrames(f"gold masklet {gold.object_id} is empty everywhere")
    if pred is not None and (pred.height, pred.width) != (gold.height, gold.width):
        raise DimensionMismatch("pred and gold masklets differ in size")
    js, fs = [], []
    for t in frames:
        g = gold.get(t)
        p = pred.get(t) if pred is not None else np.zeros_like(g)
        js.append(region_similarity_J(p, g))
        fs.append(boundary_accuracy_F(p, g, tolerance_px))
    return JF(mean(js), mean(fs))


# ---------------------------------------------------------------------------
# reports


@dataclass
class ScoreReport:
    qa: AccuracyResult | None = None
    # level -> per-item (item_id, J, F)
    grounding: dict[Level, list[tuple[str, float, float]]] = field(default_factory=dict)

    def grounding_level(self, level: Level) -> JF:
        rows = self.grounding[Level(level)]
        return JF(mean(r[1] for r in rows), mean(r[2] for r in rows))

    def grounding_average(self) -> JF:
        levels = [self.grounding_level(lvl) for lvl in Level if self.grounding.get(lvl)]
        return JF(mean(x.J for x in levels), mean(x.F for x in levels))

    def to_dict(self) -> dict:
        out: dict = {}
        if self.qa is not None:
            out["qa"] = {
                "subtasks": {s: {"level": SUBTASK_LEVEL[s].value, "correct": t.correct, "total": t.total,
                                 "accuracy": t.percent} for s, t in self.qa.subtasks.items()},
                "levels": {lvl.value: {"correct": t.correct, "total": t.total, "accuracy": t.percent}
                           for lvl, t in self.qa.levels().items()},
                "overall": {"correct": self.qa.overall.correct, "total": self.qa.overall.total,
                            "accuracy": self.qa.overall.percent},
            }
        if self.grounding:
            levels = {}
            for lvl in Level:
                if self.grounding.get(lvl):
                    jf = self.grounding_level(lvl)
                    levels[lvl.value] = {
                        "J": jf.J, "F": jf.F, "JF": jf.JF,
                        "items": [{"item_id": i, "J": j, "F": f} for i, j, f in self.grounding[lvl]],
                    }
            avg = self.grounding_average()
            out["grounding"] = {"levels": levels, "average": {"J": avg.J, "F": avg.F, "JF": avg.JF}}
        return out

    def to_text(self) -> str:
        lines = []
        if self.qa is not None:
            lines.append("Spatio-temporal reasoning (accuracy %)")
            lines.append(f"  {'Avg.':<24}{round1(self.qa.overall.percent):>6.1f}  (n={self.qa.overall.total})")
            for lvl in Level:
                tl = self.qa.level(lvl)
                if not tl.total:
                    continue
                lines.append(f"  {lvl.title:<24}{round1(tl.percent):>6.1f}  (n={tl.total})")
                for s in SUBTASKS[lvl]:
                    if s in self.qa.subtasks:
                        t = self.qa.subtasks[s]
                        lines.append(f"    {s:<22}{round1(t.percent):>6.1f}  ({t.correct}/{t.total})")
        if self.grounding:
            lines.append("Dynamic object grounding (%)")
            lines.append(f"  {'':<24}{'J':>6}{'F':>7}{'J&F':>7}")
            rows = [(lvl.title, self.grounding_level(lvl)) for lvl in Level if self.grounding.get(lvl)]
            rows.insert(0, ("Average", self.grounding_average()))
            for name, jf in rows:
                lines.append(f"  {name:<24}{round1(100 * jf.J):>6.1f}{round1(100 * jf.F):>7.1f}"
                             f"{round1(100 * jf.JF):>7.1f}")
        return "\n".join(lines) + "\n"


def build_report(qa_results: AccuracyResult | None = None,
                 grounding_results: Mapping[Level, Sequence[tuple[str, float, float]]] | None = None) -> ScoreReport:
    grounding = {Level(k): list(v) for k, v in (grounding_results or {}).items() if v}
    return ScoreReport(qa_results, grounding)


def score_grounding(items: Sequence[GroundingItem], predictions: Mapping[str, Masklet | None],
                    tolerance_px: float | None = None) -> dict[Level, list[tuple[str, float, float]]]:
    out: dict[Level, list[tuple[str, float, float]]] = defaultdict(list)
    for it in items:
        jf = jf_masklet(predictions.get(it.item_id), it.gold, tolerance_px)
        out[it.level].append((it.item_id, jf.J, jf.F))
    return dict(out)


def recompute_report(doc: Mapping) -> dict:
    """Recompute every aggregate of a report dict from its constituents."""
    out: dict = {}
    if "qa" in doc:
        subs = doc["qa"]["subtasks"]
        levels = {}
        for lvl in Level:
            c = sum(v["correct"] for v in subs.values() if v["level"] == lvl.value)
            n = sum(v["total"] for v in subs.values() if v["level"] == lvl.value)
            if n:
                levels[lvl.value] = 100.0 * c / n
        c = sum(v["correct"] for v in subs.values())
        n = sum(v["total"] for v in subs.values())
        out["qa"] = {"subtasks": {s: 100.0 * v["correct"] / v["total"] for s, v in subs.items()},
                     "levels": levels, "overall": 100.0 * c / n}
    if "grounding" in doc:
        levels = {}
        for name, block in doc["grounding"]["levels"].items():
            j = mean(i["J"] for i in block["items"])
            f = mean(i["F"] for i in block["items"])
            levels[name] = {"J": j, "F": f, "JF": (j + f) / 2}
        j = mean(v["J"] for v in levels.values())
        f = mean(v["F"] for v in levels.values())
        out["grounding"] = {"levels": levels, "average": {"J": j, "F": f, "JF": (j + f) / 2}}
    return out


# ---------------------------------------------------------------------------
# component ablation tables


@dataclass(frozen=True)
class AblationRow:
    config: str
    levels: dict[Level, Tally]

    @property
    def average(self) -> float:
        return sum(self.levels.values(), Tally()).percent


def load_ablation(path: str | Path) -> list[AblationRow]:
    """Per-configuration (correct, total) counts for each level."""
    doc = json.loads(Path(path).read_text())
    rows = []
    for name, block in doc["configs"].items():
        rows.append(AblationRow(name, {Level(k): Tally(v["correct"], v["total"])
                                       for k, v in block.items() if k in Level._value2member_map_}))
    return rows


def ablation_delta(rows: Sequence[AblationRow], full: str = "w/ T + M + S", base: str = "w/o TCM") -> float:
    """Gain of the full map over no map, on the printed (1-dp) averages."""
    by = {r.config: r for r in rows}
    return round1(round1(by[full].average) - round1(by[base].average))
