"""Prompt templates and request payloads.

Six templates ship as text assets, one per (level, task) pair. A template body
may use three placeholders: ``{TCM}`` (the serialized cognitive map),
``{FRAMES}`` (an enumerated list of frame references) and ``{LEVEL_RULES}``.
Any other ``{UPPER_CASE}`` token is an error at render time.

Payloads follow the chat-completion shape::

    {"model": ..., "temperature": 0,
     "messages": [{"role": "user", "content": [
         {"type": "text", "text": <rendered body>},
         {"type": "image_url", "image_url": {"url": <frame ref>}}, ...]}],
     "metadata": {"kind": ..., "level": ...}}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

from ..errors import KindMismatch, UnresolvedPlaceholder
from ..metrics import Level

PLACEHOLDER = re.compile(r"\{([A-Z][A-Z_]*)\}")
KNOWN = {"TCM", "FRAMES", "LEVEL_RULES"}


class TemplateKind(str, Enum):
    INTER_OBJECT_VQA = "inter_object_vqa"
    OBJECT_SCENE_VQA = "object_scene_vqa"
    CAMERA_OBJECT_VQA = "camera_object_vqa"
    INTER_OBJECT_GROUNDING = "inter_object_grounding"
    OBJECT_SCENE_GROUNDING = "object_scene_grounding"
    CAMERA_OBJECT_GROUNDING = "camera_object_grounding"

    @property
    def level(self) -> Level:
        return Level(self.value.rsplit("_", 1)[0])

    @property
    def task(self) -> str:
        return self.value.rsplit("_", 1)[1]

    @classmethod
    def for_level(cls, level: Level | str, task: str) -> "TemplateKind":
        return cls(f"{Level(level).value}_{task}")


@dataclass(frozen=True)
class PromptTemplate:
    kind: TemplateKind
    body: str

    def placeholders(self) -> set[str]:
        return set(PLACEHOLDER.findall(self.body))


def _templates_dir():
    return resources.files("dyncog.gateway.templates")


def load_template(kind: TemplateKind | str, directory: str | Path | None = None) -> PromptTemplate:
    """Load a template from the packaged assets or from ``directory``."""
    kind = TemplateKind(kind)
    name = f"{kind.value}.txt"
    body = (Path(directory) / name).read_text() if directory else _templates_dir().joinpath(name).read_text()
    return PromptTemplate(kind, body)


def level_rules(level: Level | str) -> str:
    rules = json.loads(_templates_dir().joinpath("level_rules.json").read_text())
    return rules[Level(level).value]


def format_frames(frame_refs: Sequence[str | Path]) -> str:
    return "\n".join(f"[{i}] {ref}" for i, ref in enumerate(frame_refs))


def render_prompt(template: PromptTemplate, tcm_document: str, frame_refs: Sequence[str | Path],
                  level: Level | str, model: str = "", rules: str | None = None) -> dict:
    level = Level(level)
    if template.kind.level is not level:
        raise KindMismatch(f"template {template.kind.value} cannot serve level {level.value}")
    unknown = template.placeholders() - KNOWN
    if unknown:
        raise UnresolvedPlaceholder(f"unresolvable placeholders: {sorted(unknown)}")
    values = {
        "TCM": tcm_document.rstrip("\n"),
        "FRAMES": format_frames(frame_refs),
        "LEVEL_RULES": rules if rules is not None else level_rules(level),
    }
    text = PLACEHOLDER.sub(lambda m: values[m.group(1)], template.body)
    content = [{"type": "text", "text": text}]
    content += [{"type": "image_url", "image_url": {"url": str(ref)}} for ref in frame_refs]
    return {
        "model": model,
        "temperature": 0,
        "messages": [{"role": "user", "content": content}],
        "metadata": {"kind": template.kind.value, "level": level.value},
    }


ANSWER_INSTRUCTIONS = ("Watch the frames and answer the multiple-choice question about the dynamic scene. "
                       "Reply with the letter of the correct option.")


def answer_payload(item, frame_refs: Sequence[str | Path], model: str = "") -> dict:
    opts = "\n".join(f"{lab}. {opt}" for lab, opt in zip(item.labels, item.options))
    content = [{"type": "image_url", "image_url": {"url": str(ref)}} for ref in frame_refs]
    content.append({"type": "text", "text": f"{ANSWER_INSTRUCTIONS}\n\n{item.question}\n{opts}"})
    return {
        "model": model,
        "temperature": 0,
        "messages": [{"role": "user", "content": content}],
        "metadata": {"kind": "vqa_answer", "qa_id": item.qa_id, "video_id": item.video_id},
    }
