"""Similarity scores from verdict-token log-probabilities and stated certainty."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import LogprobsUnavailable, RangeError, TokenNotFound, UnknownToken
from .vlm.types import TokenLogProb, Verdict, VerdictPosition, VerificationExchange

log = logging.getLogger(__name__)

_STRIP = " \t\r\n\"'`"


def normalize_token(text: str) -> str:
    return text.strip(_STRIP).lower()


class TokenClass(str, enum.Enum):
    SAME = "same"
    DIFF = "diff"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class TokenClassSets:
    same_tokens: frozenset = frozenset({"same"})
    diff_tokens: frozenset = frozenset({"different"})

    def __post_init__(self):
        same = frozenset(normalize_token(t) for t in self.same_tokens)
        diff = frozenset(normalize_token(t) for t in self.diff_tokens)
        if not same or not diff:
            raise ValueError("token sets must be non-empty")
        if same & diff:
            raise ValueError(f"token sets overlap: {sorted(same & diff)}")
        object.__setattr__(self, "same_tokens", same)
        object.__setattr__(self, "diff_tokens", diff)


DEFAULT_SETS = TokenClassSets()


def classify_token(token_text: str, sets: TokenClassSets = DEFAULT_SETS) -> TokenClass:
    t = normalize_token(token_text)
    if t in sets.same_tokens:
        return TokenClass.SAME
    if t in sets.diff_tokens:
        return TokenClass.DIFF
    return TokenClass.UNKNOWN


def score_from_logprob(token: TokenLogProb, sets: TokenClassSets = DEFAULT_SETS) -> float:
    """``exp(L)`` for a "same" token, ``1 - exp(L)`` for a "different" one.

    Only the sampled top-1 token is used; no renormalization over the
    vocabulary.  The result is clamped to ``[0, 1]``.
    """
    cls = classify_token(token.token_text, sets)
    if cls is TokenClass.UNKNOWN:
        raise UnknownToken(f"token {token.token_text!r} is in neither class")
    prob = math.exp(token.logprob)
    score = prob if cls is TokenClass.SAME else 1.0 - prob
    return min(1.0, max(0.0, score))


def score_from_certainty(final_verdict: Verdict, certainty) -> float:
    """Map stated certainty to similarity; inverted for "Different Identity"."""
    if isinstance(certainty, bool) or not 0 <= certainty <= 100:
        raise RangeError(f"certainty {certainty!r} outside [0, 100]")
    # one division of exact values keeps the result correctly rounded
    if Verdict(final_verdict) is Verdict.SAME:
        return certainty / 100.0
    return (100 - certainty) / 100.0


@dataclass
class ScoreTriple:
    pair_id: str
    s_text: float
    s_v1: Optional[float] = None
    s_v2: Optional[float] = None
    warnings: list[str] = field(default_factory=list)

    def channels(self) -> dict[str, Optional[float]]:
        return {"s_v1": self.s_v1, "s_v2": self.s_v2, "s_text": self.s_text}


def assemble_scores(exchange: VerificationExchange, sets: TokenClassSets = DEFAULT_SETS) -> ScoreTriple:
    """Compute ``s_v1``, ``s_v2`` and ``s_text`` for one exchange.

    The logprob channels are absent when the provider gave no logprobs, or
    when the verdict token cannot be aligned or classified; the latter case
    leaves a warning on the triple.
    """
    from .vlm.parsing import extract_verdict_token

    triple = ScoreTriple(
        pair_id=exchange.pair_id,
        s_text=score_from_certainty(exchange.verdicts.final_verdict, exchange.verdicts.certainty),
    )
    if not exchange.token_logprobs:
        return triple
    for which, attr in ((VerdictPosition.INITIAL, "s_v1"), (VerdictPosition.FINAL, "s_v2")):
        try:
            tok = extract_verdict_token(exchange, which)
            setattr(triple, attr, score_from_logprob(tok, sets))
        except (UnknownToken, TokenNotFound, LogprobsUnavailable) as exc:
            msg = f"{exchange.pair_id}: {attr} unavailable ({type(exc).__name__}: {exc})"
            log.warning(msg)
            triple.warnings.append(msg)
    return triple
