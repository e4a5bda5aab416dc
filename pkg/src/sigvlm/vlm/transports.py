"""Pluggable transports: live HTTP endpoint, cassette record/replay, scripted mock."""

from __future__ import annotations

import json
import logging
import math
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Union

from ..errors import CassetteMiss, TransportError
from .types import Completion, PromptBundle, Verdict

log = logging.getLogger(__name__)


class Transport(Protocol):
    def complete(self, bundle: PromptBundle) -> Completion: ...


# --- live -------------------------------------------------------------------

@dataclass(frozen=True)
class LiveConfig:
    endpoint: str
    model: str
    api_key_env: str = "VLM_API_KEY"
    max_in_flight: int = 4
    requests_per_minute: int = 60
    max_attempts: int = 5
    backoff_base_s: float = 1.0
    backoff_cap_s: float = 30.0
    timeout_s: float = 120.0
    top_logprobs: int = 0
    provider_tag: str = ""


class _RateWindow:
    def __init__(self, per_minute: int, clock=time.monotonic, sleep=time.sleep):
        self.per_minute = per_minute
        self.clock, self.sleep = clock, sleep
        self._stamps: deque = deque()
        self._lock = threading.Lock()

    def acquire(self):
        if self.per_minute <= 0:
            return
        while True:
            with self._lock:
                now = self.clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self.sleep(max(wait, 0.01))


_TRANSIENT = {408, 409, 425, 429, 500, 502, 503, 504}


class LiveTransport:
    """Chat-completions-style HTTPS client.

    The credential is read from the environment variable named in the
    config at call time; it never appears in cassettes or logs.  Transient
    failures (timeouts, connection errors, 429 and 5xx) are retried with
    exponential backoff up to ``max_attempts`` tries.
    """

    def __init__(self, cfg: LiveConfig, client=None, sleep: Callable[[float], None] = time.sleep):
        import httpx

        self.cfg = cfg
        self._httpx = httpx
        self._client = client or httpx.Client(timeout=cfg.timeout_s)
        self._sem = threading.BoundedSemaphore(cfg.max_in_flight)
        self._rate = _RateWindow(cfg.requests_per_minute, sleep=sleep)
        self._sleep = sleep

    def payload(self, bundle: PromptBundle) -> dict:
        content = [{"type": "text", "text": bundle.user_text}]
        for label, url in bundle.image_data_urls():
            content.append({"type": "text", "text": f"{label}:"})
            content.append({"type": "image_url", "image_url": {"url": url}})
        messages = [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": content},
        ]
        for role, text in bundle.history:
            messages.append({"role": role, "content": text})
        body = {
            "model": self.cfg.model,
            "messages": messages,
            "temperature": bundle.decoding.temperature,
            "seed": bundle.decoding.seed,
            "max_tokens": bundle.decoding.max_tokens,
        }
        if bundle.decoding.want_logprobs:
            body["logprobs"] = True
            if self.cfg.top_logprobs:
                body["top_logprobs"] = self.cfg.top_logprobs
        return body

    def _headers(self) -> dict:
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise TransportError(f"credential variable {self.cfg.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, bundle: PromptBundle) -> Completion:
        headers = self._headers()
        body = self.payload(bundle)
        last = None
        with self._sem:
            for attempt in range(self.cfg.max_attempts):
                if attempt:
                    delay = min(self.cfg.backoff_cap_s, self.cfg.backoff_base_s * 2 ** (attempt - 1))
                    self._sleep(delay)
                self._rate.acquire()
                try:
                    resp = self._client.post(self.cfg.endpoint, json=body, headers=headers)
                except (self._httpx.TimeoutException, self._httpx.TransportError) as exc:
                    last = f"{type(exc).__name__}: {exc}"
                    log.warning("attempt %d failed: %s", attempt + 1, last)
                    continue
                if resp.status_code in _TRANSIENT:
                    last = f"HTTP {resp.status_code}"
                    log.warning("attempt %d failed: %s", attempt + 1, last)
                    continue
                if resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    return parse_chat_response(resp.json(), self.cfg.provider_tag or self.cfg.model)
                except ValueError as exc:
                    raise TransportError(f"unreadable response body: {exc}") from None
        raise TransportError(f"gave up after {self.cfg.max_attempts} attempts ({last})")


def parse_chat_response(data: dict, provider_tag: str) -> Completion:
    """Read text, per-token logprobs and refusal flags from a chat response."""
    try:
        choice = data["choices"][0]
        message = choice.get("message") or {}
    except (KeyError, IndexError, TypeError):
        raise ValueError("no choices in response") from None
    refusal = message.get("refusal")
    if refusal or choice.get("finish_reason") == "content_filter":
        return Completion("", None, provider_tag, refused=True,
                          refusal_reason=str(refusal or "content_filter"))
    text = message.get("content") or ""
    tokens = None
    lp = choice.get("logprobs")
    if lp and lp.get("content"):
        tokens = tuple((str(t["token"]), float(t["logprob"])) for t in lp["content"])
    return Completion(text, tokens, provider_tag)


# --- cassettes --------------------------------------------------------------

def read_cassette(path) -> dict[str, dict]:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            entries[rec["prompt_digest"]] = rec
    return entries


class ReplayTransport:
    """Serve recorded completions keyed by prompt digest; misses are errors."""

    def __init__(self, cassette):
        self.path = Path(cassette)
        self.entries = read_cassette(self.path)

    def complete(self, bundle: PromptBundle) -> Completion:
        rec = self.entries.get(bundle.digest)
        if rec is None:
            raise CassetteMiss(bundle.digest)
        return Completion.from_record(rec)


class RecordingTransport:
    """Pass calls through to ``inner`` and append each reply to a cassette."""

    def __init__(self, inner: Transport, cassette):
        self.inner = inner
        self.path = Path(cassette)
        self._lock = threading.Lock()

    def complete(self, bundle: PromptBundle) -> Completion:
        out = self.inner.complete(bundle)
        line = json.dumps(out.to_record(bundle), sort_keys=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return out


# --- mock -------------------------------------------------------------------

@dataclass(frozen=True)
class MockReply:
    """Scripted reply.

    ``kind`` is ``"ok"``, ``"malformed"`` (garbage on every turn),
    ``"malformed_once"`` (garbage, then valid JSON after the repair turn)
    or ``"refusal"``.  Probabilities are for the emitted verdict tokens.
    """

    initial: Verdict = Verdict.SAME
    final: Verdict = Verdict.SAME
    initial_prob: float = 0.9
    final_prob: float = 0.9
    certainty: int = 90
    reasoning: str = "Letter forms, slant and proportions were compared."
    kind: str = "ok"
    with_logprobs: bool = True


def reply_tokens(reply: MockReply) -> tuple[str, tuple[tuple[str, float], ...]]:
    """Text and a plausible token stream for a scripted reply."""
    def verdict_tokens(v: Verdict, prob: float):
        lead, rest = v.value.split(" ", 1)
        return [(lead, math.log(prob)), (" " + rest, 0.0)]

    toks = [("{", 0.0), ('"', 0.0), ("initial", 0.0), ("_verdict", 0.0), ('":', 0.0), (' "', 0.0)]
    toks += verdict_tokens(reply.initial, reply.initial_prob)
    toks += [('",', 0.0), (' "', 0.0), ("reasoning", 0.0), ('":', 0.0),
             (" " + json.dumps(reply.reasoning), -0.05)]
    toks += [(",", 0.0), (' "', 0.0), ("final", 0.0), ("_verdict", 0.0), ('":', 0.0), (' "', 0.0)]
    toks += verdict_tokens(reply.final, reply.final_prob)
    toks += [('",', 0.0), (' "', 0.0), ("certainty", 0.0), ('":', 0.0), (f" {reply.certainty}", -0.2), ("}", 0.0)]
    return "".join(t for t, _ in toks), tuple(toks)


Script = Union[Mapping[str, MockReply], Callable[[PromptBundle], MockReply]]


class MockTransport:
    """Deterministic offline transport.

    ``script`` maps bundle tags (pair ids) to replies, or is a callable
    taking the bundle.  Unscripted tags fall back to ``default``.
    """

    def __init__(self, script: Optional[Script] = None, default: Optional[MockReply] = None,
                 provider_tag: str = "mock"):
        self.script = script if script is not None else {}
        self.default = default or MockReply()
        self.provider_tag = provider_tag

    def reply_for(self, bundle: PromptBundle) -> MockReply:
        if callable(self.script):
            return self.script(bundle)
        return self.script.get(bundle.tag, self.default)

    def complete(self, bundle: PromptBundle) -> Completion:
        reply = self.reply_for(bundle)
        if reply.kind == "refusal":
            return Completion("", None, self.provider_tag, refused=True, refusal_reason="scripted refusal")
        repaired = bool(bundle.history)
        if reply.kind == "malformed" or (reply.kind == "malformed_once" and not repaired):
            return Completion("I cannot produce JSON for this request.", None, self.provider_tag)
        text, toks = reply_tokens(reply)
        return Completion(text, toks if reply.with_logprobs else None, self.provider_tag)


def seeded_script(
    seed: int,
    labels: Mapping[str, str],
    malformed_rate: float = 0.0,
    refusal_rate: float = 0.0,
) -> Callable[[PromptBundle], MockReply]:
    """Label-aware random replies for pipeline demos and failure-accounting tests.

    Each pair's reply depends only on ``(seed, tag)``.  Genuine pairs lean
    towards "Same Identity", skilled forgeries are ambiguous, random
    forgeries lean towards "Different Identity".
    """
    lean = {"genuine": 0.85, "skilled": 0.5, "random": 0.1}

    def script(bundle: PromptBundle) -> MockReply:
        rng = random.Random(f"{seed}:{bundle.tag}")
        u = rng.random()
        if u < refusal_rate:
            return MockReply(kind="refusal")
        if u < refusal_rate + malformed_rate:
            return MockReply(kind="malformed")
        p_same = min(0.999, max(0.001, rng.gauss(lean.get(labels.get(bundle.tag, ""), 0.5), 0.15)))
        p1 = min(0.999, max(0.001, p_same + rng.gauss(0, 0.05)))

        def pick(p):
            return (Verdict.SAME, p) if p >= 0.5 else (Verdict.DIFFERENT, 1 - p)

        v1, q1 = pick(p1)
        v2, q2 = pick(p_same)
        return MockReply(v1, v2, q1, q2, certainty=int(round(100 * max(q2, 0.5))))

    return script
