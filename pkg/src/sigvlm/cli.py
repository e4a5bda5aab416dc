"""Command line entry point: ``sigvlm {synth,render,run,dtw,eval}``.

Exit codes: 0 ok, 2 usage, 3 data, 4 join, 5 transport.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .errors import SigVlmError
from .pipeline import EXIT_USAGE, RunConfig


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "protocol", None):
        cfg.protocol = args.protocol
    if getattr(args, "signatures", None):
        cfg.signatures_dir = args.signatures
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "canvas", None):
        cfg.render = replace(cfg.render, canvas_px=args.canvas)
    if getattr(args, "stroke_width", None):
        cfg.render = replace(cfg.render, stroke_width_px=args.stroke_width)
    if getattr(args, "pair_mode", None):
        cfg.pair_mode = args.pair_mode
    t = cfg.transport
    for flag, attr in (("transport", "kind"), ("cassette", "cassette"), ("record", "record_to"),
                       ("mock_seed", "seed"), ("endpoint", "endpoint"), ("model", "model"),
                       ("api_key_env", "api_key_env"), ("workers", "max_in_flight"),
                       ("malformed_rate", "malformed_rate"), ("refusal_rate", "refusal_rate")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(t, attr, v)
    if not cfg.protocol:
        raise ValueError("no protocol file given (--protocol or config)")
    return cfg.validate()


def _common(p):
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--protocol", help="protocol file listing comparisons")
    p.add_argument("--signatures", help="directory the protocol paths are relative to")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigvlm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic signature dataset")
    p.add_argument("--config", help="accepted for symmetry; unused")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--genuine", type=int, default=4, help="genuine samples per subject")
    p.add_argument("--skilled", type=int, default=4, help="skilled forgeries per subject")
    p.add_argument("--finger", action="store_true", help="also write finger-input (task 2) data")
    p.add_argument("--out", default="data")

    p = sub.add_parser("render", help="render referenced signatures to PNG")
    _common(p)
    p.add_argument("--canvas", type=int)
    p.add_argument("--stroke-width", type=int)

    p = sub.add_parser("run", help="query the VLM for every pair")
    _common(p)
    p.add_argument("--transport", choices=["mock", "replay", "live"])
    p.add_argument("--cassette")
    p.add_argument("--record", help="append every reply to this cassette")
    p.add_argument("--mock-seed", type=int)
    p.add_argument("--malformed-rate", type=float)
    p.add_argument("--refusal-rate", type=float)
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--api-key-env", help="name of the variable holding the credential")
    p.add_argument("--workers", type=int)
    p.add_argument("--pair-mode", choices=["two_attachments", "side_by_side"])
    p.add_argument("--canvas", type=int)
    p.add_argument("--stroke-width", type=int)

    p = sub.add_parser("dtw", help="score every pair with the DTW baseline")
    _common(p)
    p.add_argument("--band", type=int, help="Sakoe-Chiba half-width")

    p = sub.add_parser("eval", help="EER/DET breakdown of a scores file")
    p.add_argument("--config")
    p.add_argument("--scores", help="scores CSV (default: <out>/scores.csv)")
    p.add_argument("--protocol")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json", "md", "all"], default="all")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "synth":
        code, msg = pipeline.cmd_synth(args.seed, args.subjects, args.genuine, args.skilled,
                                       args.out, finger=args.finger)
        print(msg, file=sys.stderr if code else sys.stdout)
        return code

    if args.command == "eval":
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        protocol = args.protocol or cfg.protocol
        out = args.out or cfg.out_dir
        scores = args.scores or str(Path(out) / pipeline.SCORES_NAME)
        if not protocol:
            print("error: no protocol file given", file=sys.stderr)
            return EXIT_USAGE
        formats = pipeline.REPORT_FORMATS if args.format == "all" else (args.format,)
        try:
            code, text = pipeline.cmd_eval(scores, protocol, out, formats)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return pipeline.EXIT_DATA
        print(text, file=sys.stderr if code else sys.stdout)
        return code

    try:
        cfg = _load_config(args)
    except (ValueError, OSError, SigVlmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "render":
        code, s = pipeline.cmd_render(cfg)
        print(f"written={s.written} unchanged={s.unchanged} errors={len(s.errors)}")
        for path, err in sorted(s.errors.items()):
            print(f"  {path}: {err}", file=sys.stderr)
        return code

    if args.command == "run":
        code, s = pipeline.cmd_run(cfg)
        print(s.line())
        for pid, err in sorted(s.failures.items()):
            print(f"  {pid}: {err}", file=sys.stderr)
        return code

    if args.command == "dtw":
        code, s = pipeline.cmd_dtw(cfg, band=args.band)
        print(f"scored={s.scored} errors={len(s.errors)}")
        for pid, err in sorted(s.errors.items()):
            print(f"  {pid}: {err}", file=sys.stderr)
        return code
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
