"""
Replaying a recorded batch
==========================

The test fixture ships a cassette of 24 recorded replies.  Replaying it
needs no network and reproduces the scores and report exactly.
"""

from pathlib import Path

from sigvlm import pipeline

fixture = Path(__file__).resolve().parent.parent / "tests" / "data" / "replay"
cfg = pipeline.RunConfig.load(fixture / "config.json")
cfg.out_dir = "demo_out/replay"

code, summary = pipeline.cmd_run(cfg)
print(summary.line())

# one reply came without logprobs, one was refused
print(Path(cfg.out_dir, "scores.csv").read_text()[:400])

code, table = pipeline.cmd_eval(Path(cfg.out_dir) / "scores.csv", cfg.protocol, cfg.out_dir)
print(table)

# running again skips every pair already in exchanges.jsonl
code, summary = pipeline.cmd_run(cfg)
print(summary.line())

# for a live endpoint, record as you go and replay later:
#   cfg.transport.kind = "live"; cfg.transport.endpoint = ...; cfg.transport.model = ...
#   cfg.transport.record_to = "my_cassette.jsonl"
