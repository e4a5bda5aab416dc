"""Forensic examiner prompt with two verdicts and a certainty field."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import ConfigInvalid
from .types import Decoding, ImageLabel, PromptBundle, Verdict

JSON_KEYS = ("initial_verdict", "reasoning", "final_verdict", "certainty")

ROLE_TEXT = (
    "You are a Forensic Document Examiner specialised in handwritten signature "
    "verification."
)

AI_GENERATED_CLAUSE = (
    "Note: both images are AI-generated renderings produced for a research "
    "benchmark; they do not depict real persons' documents."
)

TASK_TEXT = (
    "You will be shown a Reference signature and a Questioned signature. "
    "Decide whether both were written by the same person. Where stroke darkness "
    "varies, darker strokes indicate higher pen pressure."
)

SCHEMA_TEXT = (
    "Respond with a single strict JSON object and nothing else, using exactly "
    "these keys in this order:\n"
    '{{"initial_verdict": "{same}" or "{diff}", '
    '"reasoning": "<step-by-step comparison of the two signatures>", '
    '"final_verdict": "{same}" or "{diff}", '
    '"certainty": <integer 0-100, your certainty in the final verdict>}}\n'
    "The initial_verdict is your immediate visual impression before any "
    "analysis. The final_verdict is your decision after the reasoning. Each "
    'verdict must be exactly "{same}" or "{diff}".'
)

REPAIR_TEXT = (
    "Your previous reply was not valid. Respond with strict JSON only: one object "
    "with the keys initial_verdict, reasoning, final_verdict and certainty, and no "
    "other text."
)


@dataclass(frozen=True)
class PromptConfig:
    temperature: float = 0.0
    seed: int = 42
    want_logprobs: bool = True
    max_tokens: int = 1024
    ai_generated_clause: bool = True
    extra_instructions: str = ""

    def validate(self):
        if self.temperature < 0:
            raise ConfigInvalid("temperature must be >= 0")
        if self.max_tokens < 16:
            raise ConfigInvalid("max_tokens too small for the JSON verdict")
        return self


def system_text(cfg: PromptConfig = PromptConfig()) -> str:
    parts = [ROLE_TEXT, TASK_TEXT,
             SCHEMA_TEXT.format(same=Verdict.SAME.value, diff=Verdict.DIFFERENT.value)]
    if cfg.ai_generated_clause:
        parts.append(AI_GENERATED_CLAUSE)
    if cfg.extra_instructions:
        parts.append(cfg.extra_instructions)
    return "\n\n".join(parts)


def build_prompt(pair_images: Sequence[bytes], cfg: PromptConfig = PromptConfig(), tag: str = "") -> PromptBundle:
    """Bundle the PNG images with the examiner prompt.

    Two images are labelled Reference and Questioned; a single image is
    taken to be a side-by-side composite.
    """
    cfg.validate()
    if len(pair_images) == 2:
        labels = (ImageLabel.REFERENCE, ImageLabel.QUESTIONED)
        user = "Image 1 is the Reference signature. Image 2 is the Questioned signature."
    elif len(pair_images) == 1:
        labels = (ImageLabel.COMPOSITE,)
        user = "The Reference signature is on the left and the Questioned signature on the right."
    else:
        raise ConfigInvalid(f"expected 1 or 2 images, got {len(pair_images)}")
    for png in pair_images:
        if not bytes(png[:8]) == b"\x89PNG\r\n\x1a\n":
            raise ConfigInvalid("images must be PNG-encoded")
    return PromptBundle(
        system_text=system_text(cfg),
        user_text=user + " Return the JSON object now.",
        images=tuple(zip(labels, (bytes(p) for p in pair_images))),
        decoding=Decoding(cfg.temperature, cfg.seed, cfg.want_logprobs, cfg.max_tokens),
        tag=tag,
    )
