"""One prompt/response round trip, with a single JSON repair retry."""

from __future__ import annotations

import time

from ..errors import ResponseMalformed, SafetyRefusal
from .parsing import parse_verdict_json, tag_token_stream
from .prompt import REPAIR_TEXT
from .transports import Transport
from .types import PromptBundle, VerificationExchange


def send(bundle: PromptBundle, transport: Transport) -> VerificationExchange:
    """Send ``bundle`` and parse the reply into a :class:`VerificationExchange`.

    A reply that does not parse gets one follow-up turn asking for strict
    JSON; if that also fails, :class:`ResponseMalformed` is raised.
    Provider refusals raise :class:`SafetyRefusal`.  Transport failures
    propagate unchanged.
    """
    start = time.perf_counter()
    current = bundle
    repaired = False
    while True:
        out = transport.complete(current)
        if out.refused:
            raise SafetyRefusal(f"{bundle.tag}: {out.refusal_reason or 'refused'}")
        try:
            verdicts = parse_verdict_json(out.text)
            break
        except ResponseMalformed:
            if repaired:
                raise
            repaired = True
            current = bundle.with_turn(out.text, REPAIR_TEXT)
    return VerificationExchange(
        pair_id=bundle.tag,
        prompt_digest=bundle.digest,
        raw_response_text=out.text,
        verdicts=verdicts,
        token_logprobs=tag_token_stream(out.tokens) if out.tokens else [],
        provider_tag=out.provider_tag,
        timing_ms=(time.perf_counter() - start) * 1000.0,
        repaired=repaired,
    )
