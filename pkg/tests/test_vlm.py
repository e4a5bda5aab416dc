import json
import math
import threading
import time

import httpx
import numpy as np
import pytest

from sigvlm.errors import (
    CassetteMiss,
    ConfigInvalid,
    LogprobsUnavailable,
    ResponseMalformed,
    SafetyRefusal,
    TokenNotFound,
    TransportError,
)
from sigvlm.render import RenderedImage, encode_png
from sigvlm.vlm import (
    JSON_KEYS,
    Completion,
    LiveConfig,
    LiveTransport,
    MockReply,
    MockTransport,
    PromptConfig,
    RecordingTransport,
    ReplayTransport,
    Verdict,
    VerdictPosition,
    build_prompt,
    extract_verdict_token,
    parse_verdict_json,
    send,
)
from sigvlm.vlm.transports import reply_tokens, seeded_script
from sigvlm.vlm.types import TokenLogProb, VerificationExchange

PNG_A = encode_png(RenderedImage(np.full((32, 32), 255, np.uint8)))
PNG_B = encode_png(RenderedImage(np.zeros((32, 32), np.uint8)))


def bundle(tag="p1", **cfg):
    return build_prompt([PNG_A, PNG_B], PromptConfig(**cfg), tag=tag)


# --- prompt -----------------------------------------------------------------

def test_prompt_schema_keys():
    text = bundle().system_text
    for key in JSON_KEYS:
        assert key in text


def test_prompt_verdict_strings_and_clauses():
    text = bundle().system_text
    assert '"Same Identity"' in text and '"Different Identity"' in text
    assert "Forensic Document Examiner" in text
    assert "AI-generated" in text


def test_prompt_decoding_defaults():
    b = bundle()
    assert (b.decoding.temperature, b.decoding.seed, b.decoding.want_logprobs) == (0.0, 42, True)
    assert [label.value for label, _ in b.images] == ["Reference", "Questioned"]


def test_prompt_no_logprobs():
    a, b = bundle(), bundle(want_logprobs=False)
    assert b.decoding.want_logprobs is False
    assert (a.system_text, a.user_text, a.images) == (b.system_text, b.user_text, b.images)
    assert a.decoding.seed == b.decoding.seed and a.decoding.temperature == b.decoding.temperature


def test_prompt_digest_stable_and_tag_free():
    assert bundle("x").digest == bundle("y").digest
    assert bundle().digest != build_prompt([PNG_B, PNG_A]).digest


def test_prompt_composite_and_errors():
    single = build_prompt([PNG_A])
    assert len(single.images) == 1
    with pytest.raises(ConfigInvalid):
        build_prompt([PNG_A, PNG_A, PNG_A])
    with pytest.raises(ConfigInvalid):
        build_prompt([b"not a png", PNG_A])


# --- parsing ----------------------------------------------------------------

RAW = ('{"initial_verdict":"Same Identity","reasoning":"...",'
       '"final_verdict":"Different Identity","certainty":90}')


def test_parse_basic():
    v = parse_verdict_json(RAW)
    assert (v.initial_verdict, v.final_verdict, v.certainty) == (Verdict.SAME, Verdict.DIFFERENT, 90)


def test_parse_fenced():
    assert parse_verdict_json("Here you go:\n```json\n" + RAW + "\n```") == parse_verdict_json(RAW)


def test_parse_case_and_whitespace():
    raw = RAW.replace('"Same Identity"', '"  same   IDENTITY "')
    assert parse_verdict_json(raw).initial_verdict is Verdict.SAME


@pytest.mark.parametrize("raw", [
    '{"final_verdict":"Maybe"}',
    RAW.replace("90", "101"),
    RAW.replace("90", "-1"),
    RAW.replace("90", "85.5"),
    RAW.replace('"Different Identity"', '"Unsure"'),
    "no json here",
    "{broken",
])
def test_parse_rejects(raw):
    with pytest.raises(ResponseMalformed):
        parse_verdict_json(raw)


def test_parse_prefixed_text_and_string_certainty():
    raw = "Sure. " + RAW.replace("90", '"90"')
    assert parse_verdict_json(raw).certainty == 90


# --- alignment --------------------------------------------------------------

def exchange_with(tokens):
    text = "".join(t for t, _ in tokens)
    return VerificationExchange("p", "d", text, parse_verdict_json(text),
                                [TokenLogProb(t, lp) for t, lp in tokens], "test")


STREAM = [('{"', 0.0), ("initial_verdict", 0.0), ('":', 0.0), ('"', 0.0), ("Different", -0.7),
          (" Identity", 0.0), ('","', 0.0), ("reasoning", 0.0), ('":"', 0.0), ("x", 0.0),
          ('","', 0.0), ("final_verdict", 0.0), ('":', 0.0), ('"', 0.0), ("Same", -0.1),
          (" Identity", 0.0), ('","', 0.0), ("certainty", 0.0), ('":', 0.0), ("80", 0.0), ("}", 0.0)]


def test_align_split_quote():
    tok = extract_verdict_token(exchange_with(STREAM), VerdictPosition.FINAL)
    assert (tok.token_text, tok.logprob, tok.position_tag) == ("Same", -0.1, VerdictPosition.FINAL)
    tok = extract_verdict_token(exchange_with(STREAM), VerdictPosition.INITIAL)
    assert tok.token_text == "Different"


def test_align_leading_space():
    stream = [(t if t != "Different" else " Different", lp) for t, lp in STREAM]
    stream[3] = ('" ', 0.0)
    stream[4] = ("Different", -0.7)
    tok = extract_verdict_token(exchange_with(stream), VerdictPosition.INITIAL)
    assert tok.token_text == "Different"
    stream = [('{"initial_verdict": "', 0.0), (" Different", -0.4)] + STREAM[5:]
    tok = extract_verdict_token(exchange_with(stream), VerdictPosition.INITIAL)
    assert tok.token_text == " Different" and tok.logprob == -0.4


def test_align_merged_quote():
    stream = STREAM[:3] + [('"Different', -0.7)] + STREAM[5:]
    tok = extract_verdict_token(exchange_with(stream), VerdictPosition.INITIAL)
    assert tok.token_text == '"Different'


def test_align_without_logprobs():
    ex = exchange_with(STREAM)
    ex.token_logprobs = []
    with pytest.raises(LogprobsUnavailable):
        extract_verdict_token(ex, VerdictPosition.FINAL)


def test_align_missing_key():
    ex = exchange_with(STREAM)
    ex.token_logprobs = [TokenLogProb("hello", -0.1)]
    with pytest.raises(TokenNotFound):
        extract_verdict_token(ex, VerdictPosition.FINAL)


# --- send + mock ------------------------------------------------------------

def test_mock_scripted_logprob():
    t = MockTransport({"p1": MockReply(Verdict.SAME, Verdict.SAME, 0.9, 0.9, 90)})
    ex = send(bundle("p1"), t)
    tok = extract_verdict_token(ex, VerdictPosition.FINAL)
    assert tok.token_text == "Same"
    assert tok.logprob == pytest.approx(-0.10536, abs=1e-5)
    assert ex.verdicts.certainty == 90 and ex.pair_id == "p1"


def test_send_tags_verdict_tokens():
    ex = send(bundle(), MockTransport(default=MockReply(Verdict.DIFFERENT, Verdict.SAME, 0.7, 0.6)))
    tagged = {t.position_tag: t.token_text for t in ex.token_logprobs if t.position_tag}
    assert tagged == {VerdictPosition.INITIAL: "Different", VerdictPosition.FINAL: "Same"}


def test_send_refusal():
    with pytest.raises(SafetyRefusal):
        send(bundle(), MockTransport(default=MockReply(kind="refusal")))


def test_send_malformed_after_repair():
    calls = []

    class Counting(MockTransport):
        def complete(self, b):
            calls.append(b)
            return super().complete(b)

    with pytest.raises(ResponseMalformed):
        send(bundle(), Counting(default=MockReply(kind="malformed")))
    assert len(calls) == 2
    assert calls[1].history and calls[1].history[-1][0] == "user"
    assert "strict JSON" in calls[1].history[-1][1]


def test_send_repair_recovers():
    ex = send(bundle(), MockTransport(default=MockReply(kind="malformed_once")))
    assert ex.repaired and ex.verdicts.final_verdict is Verdict.SAME


def test_send_without_logprobs():
    ex = send(bundle(), MockTransport(default=MockReply(with_logprobs=False)))
    assert ex.token_logprobs == []


def test_reply_tokens_parse():
    text, toks = reply_tokens(MockReply(Verdict.DIFFERENT, Verdict.DIFFERENT, 0.8, 0.7, 77,
                                        reasoning='quote " inside'))
    v = parse_verdict_json(text)
    assert v.certainty == 77 and v.reasoning == 'quote " inside'
    assert "".join(t for t, _ in toks) == text


def test_seeded_script_deterministic():
    s1 = seeded_script(5, {"p1": "genuine"})
    s2 = seeded_script(5, {"p1": "genuine"})
    assert s1(bundle("p1")) == s2(bundle("p1"))


# --- cassettes --------------------------------------------------------------

def test_replay_hit_and_miss(tmp_path):
    cassette = tmp_path / "c.jsonl"
    rec = RecordingTransport(MockTransport(default=MockReply(Verdict.SAME, Verdict.DIFFERENT, 0.6, 0.8, 70)), cassette)
    live = send(bundle(), rec)
    replayed = send(bundle(), ReplayTransport(cassette))
    a, b = live.to_dict(), replayed.to_dict()
    a.pop("timing_ms"), b.pop("timing_ms")
    assert a == b
    with pytest.raises(CassetteMiss) as err:
        send(build_prompt([PNG_B, PNG_B]), ReplayTransport(cassette))
    assert err.value.digest == build_prompt([PNG_B, PNG_B]).digest


def test_cassette_records_repair_turns(tmp_path):
    cassette = tmp_path / "c.jsonl"
    send(bundle(), RecordingTransport(MockTransport(default=MockReply(kind="malformed_once")), cassette))
    lines = cassette.read_text().splitlines()
    assert len(lines) == 2
    ex = send(bundle(), ReplayTransport(cassette))
    assert ex.repaired


def test_cassette_has_no_image_payload_or_secret(tmp_path, monkeypatch):
    monkeypatch.setenv("SECRET_KEY_VAR", "sk-very-secret")
    cassette = tmp_path / "c.jsonl"
    live = LiveTransport(LiveConfig("https://api.example/v1/chat", "m", "SECRET_KEY_VAR"),
                         client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json=chat_body()))))
    send(bundle(), RecordingTransport(live, cassette))
    text = cassette.read_text()
    assert "sk-very-secret" not in text and "base64" not in text
    rec = json.loads(text)
    assert set(rec) >= {"prompt_digest", "bundle_summary", "raw_response_text", "token_logprobs", "provider_tag"}


# --- live -------------------------------------------------------------------

def chat_body(tokens=None, refusal=None, finish="stop"):
    text, toks = reply_tokens(MockReply(Verdict.SAME, Verdict.SAME, 0.9, 0.8, 88))
    tokens = toks if tokens is None else tokens
    return {
        "choices": [{
            "finish_reason": finish,
            "message": {"role": "assistant", "content": None if refusal else text, "refusal": refusal},
            "logprobs": {"content": [{"token": t, "logprob": lp} for t, lp in tokens]} if tokens else None,
        }]
    }


def live(handler, monkeypatch, **kw):
    monkeypatch.setenv("TEST_VLM_KEY", "k123")
    sleeps = []
    cfg = LiveConfig("https://api.example/v1/chat", "model-x", "TEST_VLM_KEY", **kw)
    t = LiveTransport(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    return t, sleeps


def test_live_request_shape(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=chat_body())

    t, _ = live(handler, monkeypatch)
    ex = send(bundle(), t)
    body = seen["body"]
    assert seen["auth"] == "Bearer k123"
    assert body["temperature"] == 0.0 and body["seed"] == 42 and body["logprobs"] is True
    assert body["model"] == "model-x"
    images = [c for c in body["messages"][1]["content"] if c["type"] == "image_url"]
    assert len(images) == 2 and images[0]["image_url"]["url"].startswith("data:image/png;base64,")
    assert extract_verdict_token(ex, VerdictPosition.FINAL).logprob == pytest.approx(math.log(0.8))


def test_live_no_logprobs_requested(monkeypatch):
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=chat_body(tokens=[]))

    t, _ = live(handler, monkeypatch)
    ex = send(bundle(want_logprobs=False), t)
    assert "logprobs" not in seen["body"] and ex.token_logprobs == []


def test_live_retries_with_backoff(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json=chat_body())

    t, sleeps = live(handler, monkeypatch, requests_per_minute=0)
    send(bundle(), t)
    assert len(calls) == 3 and sleeps == [1.0, 2.0]


def test_live_gives_up_after_five(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("down")

    t, sleeps = live(handler, monkeypatch, requests_per_minute=0)
    with pytest.raises(TransportError):
        send(bundle(), t)
    assert len(calls) == 5 and sleeps == [1.0, 2.0, 4.0, 8.0]


def test_live_auth_error_not_retried(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    t, _ = live(handler, monkeypatch)
    with pytest.raises(TransportError):
        send(bundle(), t)
    assert len(calls) == 1


def test_live_missing_credential(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    t = LiveTransport(LiveConfig("https://x", "m", "NOPE_KEY"),
                      client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200))))
    with pytest.raises(TransportError, match="NOPE_KEY"):
        send(bundle(), t)


@pytest.mark.parametrize("body", [chat_body(refusal="I can't help with biometric data"),
                                  chat_body(finish="content_filter")])
def test_live_refusal(monkeypatch, body):
    t, _ = live(lambda r: httpx.Response(200, json=body), monkeypatch)
    with pytest.raises(SafetyRefusal):
        send(bundle(), t)


def test_live_in_flight_limit(monkeypatch):
    active, peak = [0], [0]
    lock = threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return httpx.Response(200, json=chat_body())

    t, _ = live(handler, monkeypatch, max_in_flight=2, requests_per_minute=0)
    threads = [threading.Thread(target=send, args=(bundle(str(i)), t)) for i in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert peak[0] <= 2


def test_rate_window_blocks():
    from sigvlm.vlm.transports import _RateWindow

    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    w = _RateWindow(2, clock=lambda: now[0], sleep=sleep)
    w.acquire()
    w.acquire()
    w.acquire()
    assert waits and sum(waits) == pytest.approx(60.0)


def test_completion_record_round_trip():
    c = Completion("txt", (("a", -0.5),), "prov")
    b = bundle()
    assert Completion.from_record(json.loads(json.dumps(c.to_record(b)))) == c
