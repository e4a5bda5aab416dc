"""Value types exchanged with a vision-language model."""

from __future__ import annotations

import base64
import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional


class Verdict(str, enum.Enum):
    SAME = "Same Identity"
    DIFFERENT = "Different Identity"


class VerdictPosition(str, enum.Enum):
    INITIAL = "initial_verdict"
    FINAL = "final_verdict"


class ImageLabel(str, enum.Enum):
    REFERENCE = "Reference"
    QUESTIONED = "Questioned"
    COMPOSITE = "Reference (left) | Questioned (right)"


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    seed: int = 42
    want_logprobs: bool = True
    max_tokens: int = 1024


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    images: tuple[tuple[ImageLabel, bytes], ...]
    decoding: Decoding = Decoding()
    # earlier turns, as (role, text); used for the JSON repair retry
    history: tuple[tuple[str, str], ...] = ()
    # caller's bookkeeping tag (pair id); not part of the digest
    tag: str = ""

    def canonical(self) -> dict:
        return {
            "system_text": self.system_text,
            "user_text": self.user_text,
            "images": [
                {"label": label.value, "sha256": hashlib.sha256(png).hexdigest()}
                for label, png in self.images
            ],
            "decoding": {
                "temperature": self.decoding.temperature,
                "seed": self.decoding.seed,
                "want_logprobs": self.decoding.want_logprobs,
                "max_tokens": self.decoding.max_tokens,
            },
            "history": [list(turn) for turn in self.history],
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def summary(self) -> dict:
        """Cassette-safe description: hashes only, no image payloads."""
        c = self.canonical()
        return {
            "images": c["images"],
            "decoding": c["decoding"],
            "turns": 1 + len(self.history) // 2,
            "system_sha256": hashlib.sha256(self.system_text.encode()).hexdigest(),
        }

    def with_turn(self, assistant_text: str, user_text: str) -> "PromptBundle":
        return replace(self, history=self.history + (("assistant", assistant_text), ("user", user_text)))

    def image_data_urls(self) -> list[tuple[str, str]]:
        return [(label.value, "data:image/png;base64," + base64.b64encode(png).decode("ascii"))
                for label, png in self.images]


@dataclass(frozen=True)
class VerdictJson:
    initial_verdict: Verdict
    reasoning: str
    final_verdict: Verdict
    certainty: int

    def to_dict(self) -> dict:
        return {
            "initial_verdict": self.initial_verdict.value,
            "reasoning": self.reasoning,
            "final_verdict": self.final_verdict.value,
            "certainty": self.certainty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerdictJson":
        return cls(Verdict(d["initial_verdict"]), d["reasoning"], Verdict(d["final_verdict"]), int(d["certainty"]))


@dataclass(frozen=True)
class TokenLogProb:
    token_text: str
    logprob: float
    position_tag: Optional[VerdictPosition] = None

    def __post_init__(self):
        if self.logprob > 1e-6:
            raise ValueError(f"logprob must be <= 0, got {self.logprob}")


@dataclass(frozen=True)
class Completion:
    """One raw provider reply, before parsing."""

    text: str
    tokens: Optional[tuple[tuple[str, float], ...]] = None  # None: provider gave no logprobs
    provider_tag: str = ""
    refused: bool = False
    refusal_reason: str = ""

    def to_record(self, bundle: PromptBundle) -> dict:
        return {
            "prompt_digest": bundle.digest,
            "bundle_summary": bundle.summary(),
            "raw_response_text": self.text,
            "token_logprobs": None if self.tokens is None else [[t, lp] for t, lp in self.tokens],
            "provider_tag": self.provider_tag,
            "refused": self.refused,
            "refusal_reason": self.refusal_reason,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Completion":
        toks = rec.get("token_logprobs")
        return cls(
            text=rec["raw_response_text"],
            tokens=None if toks is None else tuple((str(t), float(lp)) for t, lp in toks),
            provider_tag=rec.get("provider_tag", ""),
            refused=bool(rec.get("refused", False)),
            refusal_reason=rec.get("refusal_reason", ""),
        )


@dataclass
class VerificationExchange:
    pair_id: str
    prompt_digest: str
    raw_response_text: str
    verdicts: VerdictJson
    token_logprobs: list[TokenLogProb] = field(default_factory=list)
    provider_tag: str = ""
    timing_ms: float = 0.0
    repaired: bool = False

    @property
    def rationale(self) -> str:
        return self.verdicts.reasoning

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "prompt_digest": self.prompt_digest,
            "raw_response_text": self.raw_response_text,
            "verdicts": self.verdicts.to_dict(),
            "token_logprobs": [
                [t.token_text, t.logprob, t.position_tag.value if t.position_tag else None]
                for t in self.token_logprobs
            ],
            "provider_tag": self.provider_tag,
            "timing_ms": self.timing_ms,
            "repaired": self.repaired,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationExchange":
        return cls(
            pair_id=d["pair_id"],
            prompt_digest=d["prompt_digest"],
            raw_response_text=d["raw_response_text"],
            verdicts=VerdictJson.from_dict(d["verdicts"]),
            token_logprobs=[TokenLogProb(t, float(lp), VerdictPosition(tag) if tag else None)
                            for t, lp, tag in d["token_logprobs"]],
            provider_tag=d.get("provider_tag", ""),
            timing_ms=float(d.get("timing_ms", 0.0)),
            repaired=bool(d.get("repaired", False)),
        )
