"""QA / grounding generation and VQA answering through a transport.

Generation replies must contain a fenced ```json block holding
``{"items": [...]}``; prose around it is ignored. A reply is accepted only if
every item in it validates. Rejected replies are retried with the same payload
and kept, with their reasons, for audit.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..errors import MalformedGeneration, SchemaViolation
from ..metrics import LABELS, SUBTASKS, GroundingItem, Level, QAItem
from ..scene import VideoManifest
from .prompts import PromptTemplate, answer_payload, render_prompt
from .transport import ModelEndpoint, Transport

logger = logging.getLogger(__name__)

FENCE = re.compile(r"```(?:json)?[ \t]*\n(.*?)```", re.DOTALL)

# rejection reason codes
NO_BLOCK = "no_json_block"
BAD_JSON = "invalid_json"
NO_ITEMS = "no_items"
OPTION_COUNT = "option_count"
BAD_ANSWER = "bad_answer"
BAD_SUBTASK = "bad_subtask"
MISSING_FIELD = "missing_field"
UNKNOWN_OBJECT = "UnknownObject"


@dataclass
class GenerationResult:
    video_id: str
    kind: str
    qa: list[QAItem] = field(default_factory=list)
    grounding: list[GroundingItem] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)   # {"raw": ..., "reasons": [...]}


def extract_block(reply: str):
    m = FENCE.search(reply)
    if not m:
        raise ValueError(NO_BLOCK)
    try:
        return json.loads(m.group(1))
    except json.JSONDecodeError:
        raise ValueError(BAD_JSON) from None


def _parse_vqa(doc, video_id: str, level: Level, prefix: str) -> tuple[list[QAItem], list[str]]:
    items, reasons = [], []
    for k, rec in enumerate(doc.get("items", [])):
        where = f"item {k}"
        try:
            opts = rec["options"]
            if isinstance(opts, dict):
                keys = sorted(opts)
                if len(keys) != 4 or "".join(keys) != LABELS:
                    reasons.append(f"{OPTION_COUNT}: {where} has options {keys}")
                    continue
                opts = [opts[key] for key in keys]
            elif len(opts) != 4:
                reasons.append(f"{OPTION_COUNT}: {where} has {len(opts)} options")
                continue
            if rec["subtask"] not in SUBTASKS[level]:
                reasons.append(f"{BAD_SUBTASK}: {where} subtask {rec['subtask']!r}")
                continue
            if rec["answer"] not in LABELS:
                reasons.append(f"{BAD_ANSWER}: {where} answer {rec['answer']!r}")
                continue
            items.append(QAItem(f"{prefix}-{k:03d}", video_id, level, rec["subtask"], str(rec["question"]),
                                tuple(str(o) for o in opts), rec["answer"]))
        except (KeyError, TypeError) as exc:
            reasons.append(f"{MISSING_FIELD}: {where} ({exc})")
        except SchemaViolation as exc:
            reasons.append(f"{BAD_ANSWER}: {where} ({exc})")
    return items, reasons


def _parse_grounding(doc, manifest: VideoManifest, level: Level, prefix: str) -> tuple[list[GroundingItem], list[str]]:
    items, reasons = [], []
    known = manifest.object_ids()
    for k, rec in enumerate(doc.get("items", [])):
        try:
            oid = int(rec["object_id"])
            text = str(rec["referring_text"])
        except (KeyError, TypeError, ValueError) as exc:
            reasons.append(f"{MISSING_FIELD}: item {k} ({exc})")
            continue
        if oid not in known:
            reasons.append(f"{UNKNOWN_OBJECT}: item {k} names object {oid}, video has {sorted(known)}")
            continue
        items.append(GroundingItem(f"{prefix}-{k:03d}", manifest.video_id, level, text,
                                   manifest.masklet(oid), oid))
    return items, reasons


def generate_qa(endpoint: ModelEndpoint, manifest: VideoManifest, tcm: str, template: PromptTemplate,
                frame_refs: Sequence[str] | None = None, transport: Transport | None = None) -> GenerationResult:
    """Render the template, query the model, validate, retry on rejection.

    Raises MalformedGeneration once ``endpoint.retries`` extra attempts are
    spent; the exception carries every raw reply and the reasons.
    """
    transport = transport or endpoint.connect()
    level = template.kind.level
    if frame_refs is None:
        frame_refs = [str(f.rgb_ref) for f in manifest.frames]
    payload = render_prompt(template, tcm, frame_refs, level, endpoint.model)
    prefix = f"{manifest.video_id}-{template.kind.value}"
    result = GenerationResult(manifest.video_id, template.kind.value)
    for attempt in range(endpoint.retries + 1):
        raw = transport.send(payload, manifest.video_id)
        try:
            doc = extract_block(raw)
        except ValueError as exc:
            reasons = [str(exc)]
        else:
            if not isinstance(doc, dict) or not doc.get("items"):
                reasons = [NO_ITEMS]
            elif template.kind.task == "vqa":
                qa, reasons = _parse_vqa(doc, manifest.video_id, level, prefix)
            else:
                gr, reasons = _parse_grounding(doc, manifest, level, prefix)
            if not reasons:
                if template.kind.task == "vqa":
                    result.qa = qa
                else:
                    result.grounding = gr
                return result
        logger.warning("%s attempt %d rejected: %s", prefix, attempt + 1, "; ".join(reasons))
        result.rejected.append({"raw": raw, "reasons": reasons})
    raise MalformedGeneration(f"{prefix}: no valid reply after {endpoint.retries + 1} attempts",
                              [r["raw"] for r in result.rejected],
                              [x for r in result.rejected for x in r["reasons"]])


def answer_vqa(endpoint: ModelEndpoint, frame_refs: Sequence[str], item: QAItem,
               transport: Transport | None = None) -> str:
    """Raw model reply for one item; label mapping is left to the scorer."""
    transport = transport or endpoint.connect()
    return transport.send(answer_payload(item, frame_refs, endpoint.model), item.qa_id)


DIAGNOSTIC_INSTRUCTIONS = ("Answer each numbered question about the video with a number between 0 (no) and "
                           "1 (yes). Reply with a fenced json block holding a list of {n} numbers in order.")


def ask_diagnostics(endpoint: ModelEndpoint, frame_refs: Sequence[str], questions: Sequence[str],
                    video_id: str, transport: Transport | None = None) -> list[float]:
    transport = transport or endpoint.connect()
    text = DIAGNOSTIC_INSTRUCTIONS.format(n=len(questions)) + "\n\n" + "\n".join(
        f"{i}. {q}" for i, q in enumerate(questions, 1))
    content = [{"type": "image_url", "image_url": {"url": str(r)}} for r in frame_refs]
    content.append({"type": "text", "text": text})
    payload = {"model": endpoint.model, "temperature": 0, "messages": [{"role": "user", "content": content}],
               "metadata": {"kind": "diagnostic", "video_id": video_id}}
    raw = transport.send(payload, video_id)
    try:
        vals = extract_block(raw)
    except ValueError:
        vals = json.loads(raw)
    vals = [min(1.0, max(0.0, float(v))) for v in vals]
    if len(vals) != len(questions):
        raise MalformedGeneration(f"expected {len(questions)} diagnostic answers, got {len(vals)}", [raw],
                                  ["answer_count"])
    return vals


class JsonlWriter:
    """Append-only JSONL output shared by concurrent workers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = self.path.open("w")

    def write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_parallel(jobs: Sequence[Callable[[], GenerationResult]], max_in_flight: int) -> list:
    """Run generation jobs with at most ``max_in_flight`` concurrent requests;
    results come back in job order. Exceptions are returned, not raised."""
    def guard(job):
        try:
            return job()
        except Exception as exc:  # collected and reported by the caller
            return exc

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        return list(pool.map(guard, jobs))
