"""
From a VLM reply to similarity scores
=====================================

Build the prompt for one pair, send it through the scripted mock
transport and turn the reply into the three similarity channels.
"""

import math

from sigvlm import RenderConfig, StrokeGapPolicy, assemble_scores, encode_png, normalize, render_signature, synth_dataset
from sigvlm.vlm import MockReply, MockTransport, PromptConfig, Verdict, VerdictPosition, build_prompt, extract_verdict_token, send

ds = synth_dataset(seed=1, n_subjects=2)
pair = ds.pairs[0]
cfg = RenderConfig(canvas_px=256)
pngs = [encode_png(render_signature(normalize(ds.records[p], StrokeGapPolicy()), "stylus", cfg))
        for p in (pair.reference_path, pair.probe_path)]

bundle = build_prompt(pngs, PromptConfig(), tag=pair.pair_id)
print(bundle.system_text[:300], "...")
print("prompt digest:", bundle.digest[:16])

# the mock answers "Same Identity" twice, with verdict-token probabilities 0.8 then 0.9
transport = MockTransport({pair.pair_id: MockReply(Verdict.SAME, Verdict.SAME, 0.8, 0.9, certainty=86)})
ex = send(bundle, transport)
print(ex.raw_response_text)

tok = extract_verdict_token(ex, VerdictPosition.FINAL)
print("final verdict token:", repr(tok.token_text), "logprob", tok.logprob, "prob", math.exp(tok.logprob))

triple = assemble_scores(ex)
print("s_v1 = %.3f  s_v2 = %.3f  s_text = %.2f" % (triple.s_v1, triple.s_v2, triple.s_text))

# a "Different Identity" verdict flips both kinds of score
ex = send(bundle, MockTransport(default=MockReply(Verdict.DIFFERENT, Verdict.DIFFERENT, 0.8, 0.9, certainty=90)))
print(assemble_scores(ex).channels())
