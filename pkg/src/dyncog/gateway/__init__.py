"""Multimodal-model gateway: prompt templates, transports, generation."""

from .generate import GenerationResult, JsonlWriter, answer_vqa, ask_diagnostics, generate_qa, run_parallel
from .prompts import PromptTemplate, TemplateKind, load_template, render_prompt
from .transport import HttpTransport, MockTransport, ModelEndpoint

__all__ = [
    "GenerationResult", "JsonlWriter", "answer_vqa", "ask_diagnostics", "generate_qa", "run_parallel",
    "PromptTemplate", "TemplateKind", "load_template", "render_prompt",
    "HttpTransport", "MockTransport", "ModelEndpoint",
]
