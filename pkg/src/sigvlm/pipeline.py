"""Batch steps behind the command line: synth, render, run, dtw, eval.

Every step reads and writes plain files (signature text files, PNG, JSONL,
CSV) so runs can be inspected, diffed and resumed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import evaluation
from .baseline_dtw import dtw_score
from .errors import (
    CassetteMiss,
    CountMismatch,
    EmptyFile,
    EmptySeries,
    MalformedLine,
    ResponseMalformed,
    SafetyRefusal,
    SigVlmError,
    TooShort,
    TransportError,
)
from .render import PairMode, RenderConfig, compose_pair, encode_png, render_signature
from .scoring import TokenClassSets, assemble_scores
from .signal_model import InputKind, StrokeGapPolicy, normalize, shared_bbox
from .svc_ingest import (
    Column,
    ColumnSchema,
    ComparisonPair,
    Delimiter,
    Label,
    Task,
    parse_comparison_list,
    parse_signature_file,
    schema_for,
    synth_dataset,
    write_dataset,
)

from .vlm import (
    LiveConfig,
    LiveTransport,
    MockTransport,
    PromptConfig,
    RecordingTransport,
    ReplayTransport,
    build_prompt,
    seeded_script,
    send,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_JOIN, EXIT_TRANSPORT = 0, 2, 3, 4, 5

VLM_CHANNELS = ("s_v1", "s_v2", "s_text")
SCORES_NAME = "scores.csv"
EXCHANGES_NAME = "exchanges.jsonl"


# --- configuration ----------------------------------------------------------

@dataclass
class SchemaConfig:
    columns: list[str] = field(default_factory=lambda: ["x", "y", "t", "p"])
    count_header: bool = True
    delimiter: str = "whitespace"

    def schema(self) -> ColumnSchema:
        return ColumnSchema(tuple(Column(c) for c in self.columns), self.count_header, Delimiter(self.delimiter))


@dataclass
class TransportConfig:
    kind: str = "mock"  # mock | replay | live
    cassette: Optional[str] = None
    record_to: Optional[str] = None
    seed: int = 0
    malformed_rate: float = 0.0
    refusal_rate: float = 0.0
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = "VLM_API_KEY"
    max_in_flight: int = 4
    requests_per_minute: int = 60


@dataclass
class TokenConfig:
    same: list[str] = field(default_factory=lambda: ["same"])
    diff: list[str] = field(default_factory=lambda: ["different"])

    def sets(self) -> TokenClassSets:
        return TokenClassSets(frozenset(self.same), frozenset(self.diff))


@dataclass
class RunConfig:
    protocol: Optional[str] = None
    signatures_dir: Optional[str] = None
    schema: SchemaConfig = field(default_factory=SchemaConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    pair_mode: str = PairMode.TWO_ATTACHMENTS.value
    gap_ms: float = 150.0
    transport: TransportConfig = field(default_factory=TransportConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    tokens: TokenConfig = field(default_factory=TokenConfig)
    out_dir: str = "out"

    _NESTED = {"schema": SchemaConfig, "render": RenderConfig, "transport": TransportConfig,
               "prompt": PromptConfig, "tokens": TokenConfig}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            sub = cls._NESTED.get(k)
            kw[k] = sub(**v) if sub and isinstance(v, dict) else v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.transport.kind not in ("mock", "replay", "live"):
            raise ValueError(f"unknown transport {self.transport.kind!r}")
        if self.transport.kind == "replay" and not self.transport.cassette:
            raise ValueError("replay transport needs a cassette")
        if self.transport.kind == "live" and not (self.transport.endpoint and self.transport.model):
            raise ValueError("live transport needs endpoint and model")
        PairMode(self.pair_mode)
        self.render.validate()
        return self

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Read a JSON config; relative input paths resolve against its directory."""
        path = Path(path)
        cfg = cls.from_dict(json.loads(path.read_text()))
        base = path.parent

        def rel(p):
            return str(base / p) if p and not Path(p).is_absolute() else p

        cfg.protocol = rel(cfg.protocol)
        cfg.signatures_dir = rel(cfg.signatures_dir)
        cfg.transport.cassette = rel(cfg.transport.cassette)
        return cfg

    def signatures_base(self) -> Path:
        if self.signatures_dir:
            return Path(self.signatures_dir)
        return Path(self.protocol).parent


# --- helpers ----------------------------------------------------------------

def load_pairs(cfg: RunConfig) -> list[ComparisonPair]:
    return parse_comparison_list(Path(cfg.protocol).read_bytes())


def load_records(pairs, cfg: RunConfig):
    """Parse every referenced signature file; returns ``(records, errors)``."""
    base = cfg.signatures_base()
    schema = cfg.schema.schema()
    finger = schema_for(InputKind.FINGER, schema)
    records, errors = {}, {}
    for p in pairs:
        sch = finger if p.task is Task.TASK2_FINGER else schema
        for path in (p.reference_path, p.probe_path):
            if path in records or path in errors:
                continue
            try:
                records[path] = parse_signature_file((base / path).read_bytes(), sch,
                                                     subject_id=Path(path).stem.split("_")[0],
                                                     source_path=path)
            except (OSError, MalformedLine, CountMismatch, EmptyFile) as exc:
                errors[path] = f"{type(exc).__name__}: {exc}"
    return records, errors


def _gap(cfg: RunConfig) -> StrokeGapPolicy:
    return StrokeGapPolicy(cfg.gap_ms)


def render_pair_pngs(ref, probe, cfg: RunConfig) -> list[bytes]:
    bbox = shared_bbox([ref, probe]) if cfg.render.shared_scale else None
    images = [render_signature(normalize(r, _gap(cfg), bbox=bbox), r.input_kind, cfg.render)
              for r in (ref, probe)]
    return [encode_png(im) for im in compose_pair(images[0], images[1], PairMode(cfg.pair_mode))]


def _merge_scores(path: Path, pairs, new: dict[str, dict], channels) -> None:
    """Update ``channels`` for the given pair ids, keeping any other columns."""
    existing, old_channels = ({}, ())
    if path.exists():
        rows, old_channels = evaluation.read_scores_csv(path.read_bytes())
        existing = {r.pair_id: dict(r.scores) for r in rows}
    all_channels = [c for c in evaluation.CHANNELS if c in set(old_channels) | set(channels)]
    all_channels += [c for c in list(old_channels) + list(channels) if c not in all_channels]
    by_id = {p.pair_id: p for p in pairs}
    merged = {}
    for pid in set(existing) | set(new):
        scores = dict(existing.get(pid, {}))
        scores.update(new.get(pid, {}))
        merged[pid] = scores
    rows = []
    for pid, scores in merged.items():
        p = by_id.get(pid)
        rows.append(evaluation.ScoreRow(pid, p.task if p else Task.TASK1_STYLUS,
                                        p.label if p else Label.UNLABELED, scores))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(evaluation.write_scores_csv(rows, all_channels))


# --- synth ------------------------------------------------------------------

def cmd_synth(seed: int, n_subjects: int, genuine: int, skilled: int, out_dir,
              finger: bool = False) -> tuple[int, str]:
    kinds = (InputKind.STYLUS, InputKind.FINGER) if finger else (InputKind.STYLUS,)
    try:
        ds = synth_dataset(seed, n_subjects, genuine, skilled, kinds)
    except SigVlmError as exc:
        return EXIT_USAGE, f"error: {exc}"
    protocol = write_dataset(ds, out_dir)
    counts = {}
    for p in ds.pairs:
        counts[p.label.value] = counts.get(p.label.value, 0) + 1
    lines = [f"wrote {len(ds.records)} signatures and {len(ds.pairs)} pairs to {out_dir}",
             f"protocol: {protocol}"]
    lines += [f"  {t.value}: {n} pairs" for t, n in sorted(ds.task_counts.items())]
    lines += [f"  {k}: {v}" for k, v in sorted(counts.items())]
    return EXIT_OK, "\n".join(lines)


# --- render -----------------------------------------------------------------

@dataclass
class RenderSummary:
    written: int = 0
    unchanged: int = 0
    errors: dict = field(default_factory=dict)


def cmd_render(cfg: RunConfig) -> tuple[int, RenderSummary]:
    """Render every referenced signature to ``out_dir/images/<path>.png``.

    Files whose bytes would not change are left untouched.
    """
    pairs = load_pairs(cfg)
    records, errors = load_records(pairs, cfg)
    summary = RenderSummary(errors=errors)
    images = Path(cfg.out_dir) / "images"
    for path, rec in sorted(records.items()):
        try:
            png = encode_png(render_signature(normalize(rec, _gap(cfg)), rec.input_kind, cfg.render))
        except SigVlmError as exc:
            summary.errors[path] = f"{type(exc).__name__}: {exc}"
            continue
        target = images / (path + ".png")
        if target.exists() and hashlib.sha256(target.read_bytes()).digest() == hashlib.sha256(png).digest():
            summary.unchanged += 1
            continue
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(png)
        summary.written += 1
    return (EXIT_DATA if summary.errors else EXIT_OK), summary


# --- run --------------------------------------------------------------------

DONE_STATUSES = ("scored", "refused", "malformed")


@dataclass
class RunSummary:
    scored: int = 0
    refused: int = 0
    malformed: int = 0
    failed: int = 0
    skipped: int = 0
    failures: dict = field(default_factory=dict)

    def line(self) -> str:
        return (f"scored={self.scored} refused={self.refused} malformed={self.malformed} "
                f"failed={self.failed} skipped={self.skipped}")


def make_transport(cfg: RunConfig, labels=None, client=None):
    t = cfg.transport
    if t.kind == "mock":
        transport = MockTransport(seeded_script(t.seed, labels or {}, t.malformed_rate, t.refusal_rate))
    elif t.kind == "replay":
        transport = ReplayTransport(t.cassette)
    else:
        transport = LiveTransport(LiveConfig(
            endpoint=t.endpoint, model=t.model, api_key_env=t.api_key_env,
            max_in_flight=t.max_in_flight, requests_per_minute=t.requests_per_minute,
        ), client=client)
    if t.record_to:
        transport = RecordingTransport(transport, t.record_to)
    return transport


def read_exchanges(path: Path) -> dict[str, dict]:
    """Last entry per pair id; a torn trailing line from an interrupt is ignored."""
    done = {}
    if not path.exists():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            continue
        done[rec["pair_id"]] = rec
    return done


def _drop_torn_tail(path: Path) -> None:
    # an interrupted write leaves a partial last line; appending onto it
    # would corrupt the next record too
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        log.warning("%s: dropping %d bytes of a partial record", path, len(data) - cut)
        with open(path, "r+b") as fh:
            fh.truncate(cut)


def _one_pair(pair, records, cfg, transport, sets):
    try:
        pngs = render_pair_pngs(records[pair.reference_path], records[pair.probe_path], cfg)
        bundle = build_prompt(pngs, cfg.prompt, tag=pair.pair_id)
        ex = send(bundle, transport)
        triple = assemble_scores(ex, sets)
        return {"pair_id": pair.pair_id, "status": "scored", "exchange": ex.to_dict(),
                "scores": {k: v for k, v in triple.channels().items()}, "warnings": triple.warnings}
    except SafetyRefusal as exc:
        return {"pair_id": pair.pair_id, "status": "refused", "error": str(exc)}
    except ResponseMalformed as exc:
        return {"pair_id": pair.pair_id, "status": "malformed", "error": str(exc)}
    except (TransportError, CassetteMiss) as exc:
        return {"pair_id": pair.pair_id, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def cmd_run(cfg: RunConfig, transport=None, stop_after: Optional[int] = None) -> tuple[int, RunSummary]:
    """Send every pair through the VLM and persist exchanges and scores.

    Pairs already recorded as scored, refused or malformed are skipped, so
    an interrupted run can simply be restarted.  Transport failures are not
    persisted and will be retried next time.  ``stop_after`` halts after
    that many new outcomes (used to exercise resumption).
    """
    pairs = load_pairs(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ex_path = out / EXCHANGES_NAME
    _drop_torn_tail(ex_path)
    done = {pid for pid, rec in read_exchanges(ex_path).items() if rec["status"] in DONE_STATUSES}
    todo = [p for p in pairs if p.pair_id not in done]
    summary = RunSummary(skipped=len(pairs) - len(todo))

    records, errors = load_records(todo, cfg)
    runnable = []
    for p in todo:
        bad = [e for e in (p.reference_path, p.probe_path) if e in errors]
        if bad:
            summary.failed += 1
            summary.failures[p.pair_id] = "; ".join(f"{b}: {errors[b]}" for b in bad)
        else:
            runnable.append(p)

    labels = {p.pair_id: p.label.value for p in pairs}
    transport = transport or make_transport(cfg, labels)
    sets = cfg.tokens.sets()
    lock = threading.Lock()
    written = 0
    workers = max(1, cfg.transport.max_in_flight)
    with open(ex_path, "a", encoding="utf-8") as fh, ThreadPoolExecutor(workers) as pool:
        futures = {pool.submit(_one_pair, p, records, cfg, transport, sets): p for p in runnable}
        for fut in as_completed(futures):
            rec = fut.result()
            status = rec["status"]
            with lock:
                if status == "failed":
                    summary.failed += 1
                    summary.failures[rec["pair_id"]] = rec["error"]
                    continue
                setattr(summary, status, getattr(summary, status) + 1)
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                fh.flush()
                written += 1
                if stop_after is not None and written >= stop_after:
                    for f in futures:
                        f.cancel()
                    break

    _write_vlm_scores(cfg, pairs)
    attempted = len(runnable)
    if attempted and summary.failed >= len(todo) and not (summary.scored or summary.refused or summary.malformed):
        return EXIT_TRANSPORT, summary
    return EXIT_OK, summary


def _write_vlm_scores(cfg: RunConfig, pairs) -> None:
    out = Path(cfg.out_dir)
    recs = read_exchanges(out / EXCHANGES_NAME)
    new = {}
    for pid, rec in recs.items():
        if rec["status"] == "scored":
            new[pid] = {ch: rec["scores"].get(ch) for ch in VLM_CHANNELS}
        elif rec["status"] in DONE_STATUSES:
            new[pid] = {ch: None for ch in VLM_CHANNELS}
    _merge_scores(out / SCORES_NAME, pairs, new, VLM_CHANNELS)


# --- dtw --------------------------------------------------------------------

@dataclass
class DtwSummary:
    scored: int = 0
    errors: dict = field(default_factory=dict)


def cmd_dtw(cfg: RunConfig, band: Optional[int] = None) -> tuple[int, DtwSummary]:
    pairs = load_pairs(cfg)
    summary = DtwSummary()
    if not pairs:
        summary.errors["<protocol>"] = "no pairs"
        return EXIT_DATA, summary
    records, errors = load_records(pairs, cfg)
    new = {}
    for p in pairs:
        bad = [e for e in (p.reference_path, p.probe_path) if e in errors]
        if bad:
            summary.errors[p.pair_id] = "; ".join(f"{b}: {errors[b]}" for b in bad)
            new[p.pair_id] = {"s_dtw": None}
            continue
        try:
            s = dtw_score(records[p.reference_path], records[p.probe_path], _gap(cfg), band=band)
        except (TooShort, EmptySeries) as exc:
            summary.errors[p.pair_id] = f"{type(exc).__name__}: {exc}"
            new[p.pair_id] = {"s_dtw": None}
            continue
        new[p.pair_id] = {"s_dtw": s}
        summary.scored += 1
    _merge_scores(Path(cfg.out_dir) / SCORES_NAME, pairs, new, ("s_dtw",))
    return (EXIT_DATA if summary.scored == 0 else EXIT_OK), summary


# --- eval -------------------------------------------------------------------

REPORT_FORMATS = ("csv", "json", "md")


def cmd_eval(scores_csv, protocol, out_dir, formats=REPORT_FORMATS) -> tuple[int, str]:
    """Join scores with protocol labels, compute the breakdown, write reports.

    Returns the exit status and the Markdown table (or an error message).
    """
    rows, channels = evaluation.read_scores_csv(Path(scores_csv).read_bytes())
    pairs = parse_comparison_list(Path(protocol).read_bytes())
    try:
        joined = evaluation.join_with_protocol(rows, pairs)
    except evaluation.JoinError as exc:
        return EXIT_JOIN, f"error: {exc}"
    report = evaluation.breakdown(joined, channels)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fmt in formats:
        (out / f"report.{fmt}").write_bytes(evaluation.emit_report(report, fmt))
    det_dir = out / "det"
    det_dir.mkdir(exist_ok=True)
    for (task, scenario, ch), cell in report.cells.items():
        if not cell.empty:
            (det_dir / f"{task.value}_{scenario.value}_{ch}.csv").write_bytes(evaluation.det_csv(cell))
    return EXIT_OK, evaluation.emit_report(report, "md").decode()
