"""Verdict JSON parsing and verdict-token alignment in a logprob stream."""

from __future__ import annotations

import json
import re

from ..errors import LogprobsUnavailable, ResponseMalformed, TokenNotFound
from .types import TokenLogProb, Verdict, VerdictJson, VerdictPosition, VerificationExchange

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S | re.I)
_VERDICTS = {" ".join(v.value.lower().split()): v for v in Verdict}


def _first_object(raw: str):
    fenced = _FENCE.search(raw)
    text = fenced.group(1) if fenced else raw
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ResponseMalformed("no JSON object found", raw)


def _verdict(value, key, raw) -> Verdict:
    if not isinstance(value, str):
        raise ResponseMalformed(f"{key} is not a string", raw)
    v = _VERDICTS.get(" ".join(value.lower().split()))
    if v is None:
        raise ResponseMalformed(f"{key} has invalid value {value!r}", raw)
    return v


def parse_verdict_json(raw: str) -> VerdictJson:
    """Extract and validate the first JSON object in a model reply.

    Code fences are tolerated.  Verdict strings match case-insensitively
    after collapsing whitespace; certainty must be an integer in 0-100
    (integral floats such as ``90.0`` are accepted).
    """
    obj = _first_object(raw)
    missing = [k for k in ("initial_verdict", "final_verdict", "certainty") if k not in obj]
    if missing:
        raise ResponseMalformed(f"missing keys {missing}", raw)
    initial = _verdict(obj["initial_verdict"], "initial_verdict", raw)
    final = _verdict(obj["final_verdict"], "final_verdict", raw)
    cert = obj["certainty"]
    if isinstance(cert, str):
        try:
            cert = float(cert.strip().rstrip("%"))
        except ValueError:
            raise ResponseMalformed("certainty is not numeric", raw) from None
    if isinstance(cert, bool) or not isinstance(cert, (int, float)) or cert != int(cert):
        raise ResponseMalformed("certainty is not an integer", raw)
    cert = int(cert)
    if not 0 <= cert <= 100:
        raise ResponseMalformed(f"certainty {cert} outside 0-100", raw)
    reasoning = obj.get("reasoning", "")
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning, sort_keys=True)
    return VerdictJson(initial, reasoning, final, cert)


def _value_start(text: str, which: VerdictPosition) -> int:
    m = re.search(r'"%s"\s*:\s*"\s*' % re.escape(which.value), text)
    if m is None:
        raise TokenNotFound(f"key {which.value!r} not found in token stream")
    return m.end()


def locate_verdict_token(tokens, which: VerdictPosition) -> int:
    """Index of the token that carries the first character of a verdict value.

    ``tokens`` is a sequence of ``(text, logprob)``.  The token texts are
    concatenated, the key's opening value quote is found, and the token
    whose span covers the first non-space character after it is returned.
    A token like ``'"Same'`` or ``' Different'`` thus aligns correctly.
    """
    texts = [t for t, _ in tokens]
    joined = "".join(texts)
    start = _value_start(joined, which)
    if start >= len(joined):
        raise TokenNotFound(f"{which.value} value is empty")
    pos = 0
    for idx, t in enumerate(texts):
        if pos <= start < pos + len(t):
            return idx
        pos += len(t)
    raise TokenNotFound(f"{which.value} value is beyond the token stream")


def extract_verdict_token(exchange: VerificationExchange, which: VerdictPosition) -> TokenLogProb:
    if not exchange.token_logprobs:
        raise LogprobsUnavailable(f"{exchange.pair_id}: provider {exchange.provider_tag!r} gave no logprobs")
    which = VerdictPosition(which)
    for tok in exchange.token_logprobs:
        if tok.position_tag is which:
            return tok
    idx = locate_verdict_token([(t.token_text, t.logprob) for t in exchange.token_logprobs], which)
    tok = exchange.token_logprobs[idx]
    return TokenLogProb(tok.token_text, tok.logprob, which)


def tag_token_stream(tokens) -> list[TokenLogProb]:
    """Wrap a raw ``(text, logprob)`` stream, tagging both verdict tokens."""
    out = [TokenLogProb(t, float(lp)) for t, lp in tokens]
    for which in VerdictPosition:
        try:
            idx = locate_verdict_token(tokens, which)
        except TokenNotFound:
            continue
        out[idx] = TokenLogProb(out[idx].token_text, out[idx].logprob, which)
    return out
