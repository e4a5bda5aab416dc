"""Signature file and protocol parsing, plus a synthetic dataset generator."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CountMismatch, EmptyFile, InvalidParams, MalformedLine
from .signal_model import InputKind, SamplePoint, SignatureRecord


class Column(str, enum.Enum):
    X = "x"
    Y = "y"
    T = "t"
    P = "p"
    PEN_STATE = "pen_state"
    IGNORE = "ignore"


class Delimiter(str, enum.Enum):
    WHITESPACE = "whitespace"
    COMMA = "comma"


class Task(str, enum.Enum):
    TASK1_STYLUS = "task1"
    TASK2_FINGER = "task2"
    TASK3_COMBINED = "task3"

    @property
    def number(self) -> int:
        return int(self.value[-1])


class Label(str, enum.Enum):
    GENUINE = "genuine"
    SKILLED = "skilled"
    RANDOM = "random"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class ColumnSchema:
    column_order: tuple[Column, ...] = (Column.X, Column.Y, Column.T, Column.P)
    has_count_header: bool = True
    delimiter: Delimiter = Delimiter.WHITESPACE

    def __post_init__(self):
        cols = tuple(Column(c) for c in self.column_order)
        object.__setattr__(self, "column_order", cols)
        object.__setattr__(self, "delimiter", Delimiter(self.delimiter))
        for c in (Column.X, Column.Y):
            if cols.count(c) != 1:
                raise InvalidParams(f"column {c.value} must appear exactly once")
        for c in (Column.T, Column.P, Column.PEN_STATE):
            if cols.count(c) > 1:
                raise InvalidParams(f"column {c.value} may appear at most once")

    def split(self, line: str) -> list[str]:
        if self.delimiter is Delimiter.COMMA:
            return [f.strip() for f in line.split(",")]
        return line.split()

    def join(self, fields: Iterable[str]) -> str:
        return ("," if self.delimiter is Delimiter.COMMA else " ").join(fields)


DEFAULT_SCHEMA = ColumnSchema()


@dataclass(frozen=True)
class ComparisonPair:
    pair_id: str
    reference_path: str
    probe_path: str
    task: Task = Task.TASK1_STYLUS
    label: Label = Label.UNLABELED


@dataclass
class Dataset:
    records: dict[str, SignatureRecord]
    pairs: list[ComparisonPair]
    task_counts: dict[Task, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.task_counts:
            self.task_counts = count_tasks(self.pairs)


def count_tasks(pairs: Iterable[ComparisonPair]) -> dict[Task, int]:
    counts: dict[Task, int] = {}
    for p in pairs:
        counts[p.task] = counts.get(p.task, 0) + 1
    return counts


def _number(text: str, line_no: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise MalformedLine(line_no, f"non-numeric field {text!r}") from None
    if not math.isfinite(v):
        raise MalformedLine(line_no, f"non-finite field {text!r}")
    return v


def parse_signature_file(
    data: bytes,
    schema: ColumnSchema = DEFAULT_SCHEMA,
    subject_id: str = "",
    source_path: str = "",
) -> SignatureRecord:
    """Parse one signature time-series file.

    Without a P column the record is treated as finger input with zero
    pressure.  Without a T column, sample indices stand in for timestamps.
    Line numbers in errors are 1-based.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedLine(0, f"not UTF-8: {exc}") from None
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(n, ln) for n, ln in lines if ln]
    if not lines:
        raise EmptyFile(source_path or "<bytes>")

    expected = None
    if schema.has_count_header:
        n, head = lines[0]
        try:
            expected = int(head)
        except ValueError:
            raise MalformedLine(n, f"bad count header {head!r}") from None
        lines = lines[1:]
        if expected != len(lines):
            raise CountMismatch(f"header says {expected} samples, found {len(lines)}")
        if not lines:
            raise EmptyFile(source_path or "<bytes>")

    cols = schema.column_order
    points = []
    for idx, (n, ln) in enumerate(lines):
        fields = schema.split(ln)
        if len(fields) != len(cols):
            raise MalformedLine(n, f"expected {len(cols)} fields, got {len(fields)}")
        vals = {}
        for c, f in zip(cols, fields):
            if c is Column.IGNORE:
                continue
            vals[c] = _number(f, n)
        p = vals.get(Column.P, 0.0)
        if p < 0:
            raise MalformedLine(n, "negative pressure")
        pen = vals.get(Column.PEN_STATE)
        points.append(SamplePoint(
            x=vals[Column.X],
            y=vals[Column.Y],
            t=vals.get(Column.T, float(idx)),
            p=p,
            pen_down=None if pen is None else pen > 0,
        ))
    kind = InputKind.STYLUS if Column.P in cols else InputKind.FINGER
    try:
        return SignatureRecord(subject_id, tuple(points), kind, source_path)
    except ValueError as exc:
        raise MalformedLine(0, str(exc)) from None


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_signature_file(record: SignatureRecord, schema: ColumnSchema = DEFAULT_SCHEMA) -> bytes:
    """Inverse of :func:`parse_signature_file` for the same schema."""
    out = []
    if schema.has_count_header:
        out.append(str(len(record.sample_points)))
    for s in record.sample_points:
        fields = []
        for c in schema.column_order:
            if c is Column.X:
                fields.append(_fmt(s.x))
            elif c is Column.Y:
                fields.append(_fmt(s.y))
            elif c is Column.T:
                fields.append(_fmt(s.t))
            elif c is Column.P:
                fields.append(_fmt(s.p))
            elif c is Column.PEN_STATE:
                fields.append("1" if s.pen_down else "0")
            else:
                fields.append("0")
        out.append(schema.join(fields))
    return ("\n".join(out) + "\n").encode("utf-8")


_LABELS = {"genuine": Label.GENUINE, "skilled": Label.SKILLED, "random": Label.RANDOM,
           "unlabeled": Label.UNLABELED}
_TASKS = {t.value: t for t in Task}


def parse_comparison_list(data: bytes, task: Task = Task.TASK1_STYLUS) -> list[ComparisonPair]:
    """Parse a protocol file of ``<reference> <probe> [label] [task]`` lines.

    ``#`` comments and blank lines are skipped.  ``pair_id`` is the
    zero-padded 0-based physical line index.  The optional fourth column
    (``task1``/``task2``/``task3``) overrides ``task``.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedLine(0, f"not UTF-8: {exc}") from None
    pairs = []
    for i, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if not 2 <= len(fields) <= 4:
            raise MalformedLine(i + 1, f"expected 2-4 fields, got {len(fields)}")
        label = Label.UNLABELED
        if len(fields) >= 3:
            try:
                label = _LABELS[fields[2].lower()]
            except KeyError:
                raise MalformedLine(i + 1, f"unknown label {fields[2]!r}") from None
        pair_task = task
        if len(fields) == 4:
            try:
                pair_task = _TASKS[fields[3].lower()]
            except KeyError:
                raise MalformedLine(i + 1, f"unknown task {fields[3]!r}") from None
        pairs.append(ComparisonPair(f"{i:06d}", fields[0], fields[1], pair_task, label))
    return pairs


def format_comparison_list(pairs: Iterable[ComparisonPair], header: str = "") -> bytes:
    """Write pairs so that re-parsing reproduces their ids.

    Ids are line indices, so pairs must be numbered consecutively after the
    header comment lines.
    """
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    for p in pairs:
        fields = [p.reference_path, p.probe_path]
        fields.append(p.label.value)
        fields.append(p.task.value)
        lines.append(" ".join(fields))
    return ("\n".join(lines) + "\n").encode("utf-8")


# --- synthetic data ---------------------------------------------------------

GENUINE_JITTER = 0.035
SKILLED_JITTER = 0.09
SAMPLE_MS = 10
STROKE_GAP_MS = 250


@dataclass
class _Subject:
    strokes: list[dict]


def _make_subject(rng: random.Random) -> _Subject:
    strokes = []
    x0 = 0.0
    for _ in range(rng.randint(2, 4)):
        width = rng.uniform(0.6, 1.4)
        comps = []
        for _ in range(rng.randint(2, 3)):
            comps.append((
                rng.uniform(0.15, 0.45),          # amplitude
                rng.uniform(0.8, 4.0),            # cycles over the stroke
                rng.uniform(0.0, 2 * math.pi),    # phase
                rng.random() < 0.5,               # x (False) or y (True)
            ))
        strokes.append({
            "x0": x0,
            "width": width,
            "y0": rng.uniform(-0.2, 0.2),
            "comps": comps,
            "n": rng.randint(30, 55),
            "p_freq": rng.uniform(0.5, 2.0),
            "p_phase": rng.uniform(0, 2 * math.pi),
        })
        x0 += width + rng.uniform(0.1, 0.4)
    return _Subject(strokes)


def _noise_terms(rng: random.Random, amp: float):
    return [(rng.gauss(0, amp), rng.uniform(0.5, 2.5), rng.uniform(0, 2 * math.pi)) for _ in range(3)]


def _noise(terms, tau):
    return sum(a * math.sin(2 * math.pi * f * tau + ph) for a, f, ph in terms)


def _realize(subject: _Subject, rng: random.Random, jitter: float, warp: float,
             kind: InputKind, subject_id: str, path: str) -> SignatureRecord:
    scale = rng.uniform(0.9, 1.1)
    dx, dy = rng.uniform(-50, 50), rng.uniform(-50, 50)
    points = []
    t = 0.0
    last = (0.0, 0.0)
    for k, st in enumerate(subject.strokes):
        xn, yn, pn = _noise_terms(rng, jitter), _noise_terms(rng, jitter), _noise_terms(rng, jitter)
        w_amp = rng.uniform(-warp, warp)
        n = max(8, int(round(st["n"] * (1 + rng.uniform(0, 2 * warp)))))
        if k > 0:
            if kind is InputKind.STYLUS:
                # pen-up samples hovering over the end of the previous stroke
                hx, hy = last
                for _ in range(2):
                    t += SAMPLE_MS
                    points.append(SamplePoint(round(dx + 1000 * scale * hx), round(dy + 1000 * scale * hy), t, 0.0))
            t += STROKE_GAP_MS
        for i in range(n):
            u = i / (n - 1)
            tau = u + w_amp * math.sin(math.pi * u)
            x = st["x0"] + st["width"] * tau + _noise(xn, tau)
            y = st["y0"] + _noise(yn, tau)
            for amp, cyc, ph, on_y in st["comps"]:
                v = amp * math.sin(2 * math.pi * cyc * tau + ph)
                if on_y:
                    y += v
                else:
                    x += 0.3 * v
            if kind is InputKind.STYLUS:
                press = 0.55 + 0.35 * math.sin(2 * math.pi * st["p_freq"] * tau + st["p_phase"]) + _noise(pn, tau)
                p = float(min(1023, max(1, round(100 + 800 * press))))
            else:
                p = 0.0
            points.append(SamplePoint(round(dx + 1000 * scale * x), round(dy + 1000 * scale * y), t, p))
            if i < n - 1:
                t += SAMPLE_MS
        last = (x, y)
    return SignatureRecord(subject_id, tuple(points), kind, path)


def synth_dataset(
    seed: int,
    n_subjects: int,
    genuine_per_subject: int = 4,
    skilled_per_subject: int = 4,
    kinds: Iterable[InputKind] = (InputKind.STYLUS,),
) -> Dataset:
    """Generate a deterministic desk-scale dataset.

    Each subject gets a base trajectory built from 2-4 sinusoidal strokes.
    Genuine samples add small smooth jitter; skilled forgeries add larger
    jitter plus a timing warp; random forgeries pair a subject's reference
    with another subject's genuine sample.  Stylus records carry a smooth
    positive pressure signal, finger records none.

    The first genuine sample of each subject is the reference for all its
    pairs.  Stylus pairs belong to task 1 and finger pairs to task 2.
    """
    kinds = tuple(InputKind(k) for k in kinds)
    if n_subjects < 2:
        raise InvalidParams("need at least 2 subjects to form random-forgery pairs")
    if genuine_per_subject < 2:
        raise InvalidParams("need at least 2 genuine samples per subject")
    if skilled_per_subject < 0:
        raise InvalidParams("skilled_per_subject must be non-negative")
    if not kinds:
        raise InvalidParams("no input kinds requested")

    rng = random.Random(seed)
    subjects = [_make_subject(rng) for _ in range(n_subjects)]
    records: dict[str, SignatureRecord] = {}
    pairs: list[ComparisonPair] = []
    for kind in kinds:
        task = Task.TASK1_STYLUS if kind is InputKind.STYLUS else Task.TASK2_FINGER
        krng = random.Random(f"{seed}:{kind.value}")
        for s, subj in enumerate(subjects):
            sid = f"u{s:03d}"
            for g in range(genuine_per_subject):
                path = f"{kind.value}/{sid}_g{g:02d}.txt"
                records[path] = _realize(subj, krng, GENUINE_JITTER, 0.0, kind, sid, path)
            for f in range(skilled_per_subject):
                path = f"{kind.value}/{sid}_s{f:02d}.txt"
                records[path] = _realize(subj, krng, SKILLED_JITTER, 0.12, kind, sid, path)
        for s in range(n_subjects):
            ref = f"{kind.value}/u{s:03d}_g00.txt"
            for g in range(1, genuine_per_subject):
                pairs.append(_pair(ref, f"{kind.value}/u{s:03d}_g{g:02d}.txt", task, Label.GENUINE))
            for f in range(skilled_per_subject):
                pairs.append(_pair(ref, f"{kind.value}/u{s:03d}_s{f:02d}.txt", task, Label.SKILLED))
            others = [o for o in range(n_subjects) if o != s]
            for k in range(max(1, skilled_per_subject)):
                o = others[k % len(others)]
                g = 1 + (k // len(others)) % (genuine_per_subject - 1)
                pairs.append(_pair(ref, f"{kind.value}/u{o:03d}_g{g:02d}.txt", task, Label.RANDOM))
    pairs = [ComparisonPair(f"{i:06d}", p.reference_path, p.probe_path, p.task, p.label)
             for i, p in enumerate(pairs)]
    return Dataset(records, pairs)


def _pair(ref, probe, task, label):
    return ComparisonPair("", ref, probe, task, label)


# --- directory layout -------------------------------------------------------

PROTOCOL_NAME = "protocol.txt"


def write_dataset(dataset: Dataset, out_dir, schema: ColumnSchema = DEFAULT_SCHEMA) -> Path:
    """Write signature files and ``protocol.txt``; returns the protocol path.

    Finger records are written without a pressure column.
    """
    out = Path(out_dir)
    for path, rec in sorted(dataset.records.items()):
        target = out / path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(format_signature_file(rec, schema_for(rec.input_kind, schema)))
    protocol = out / PROTOCOL_NAME
    protocol.write_bytes(format_comparison_list(dataset.pairs))
    return protocol


def schema_for(kind: InputKind, schema: ColumnSchema = DEFAULT_SCHEMA) -> ColumnSchema:
    if kind is InputKind.FINGER and Column.P in schema.column_order:
        return ColumnSchema(tuple(c for c in schema.column_order if c is not Column.P),
                            schema.has_count_header, schema.delimiter)
    return schema


def load_dataset(
    protocol_path,
    signatures_dir=None,
    schema: ColumnSchema = DEFAULT_SCHEMA,
    finger_schema: ColumnSchema | None = None,
    task: Task = Task.TASK1_STYLUS,
) -> Dataset:
    """Load a protocol file and every signature file it references.

    Task 2 references are parsed with ``finger_schema`` (defaults to
    ``schema`` without its pressure column).  Parse failures are collected
    and raised together as :class:`DatasetErrors`.
    """
    protocol_path = Path(protocol_path)
    base = Path(signatures_dir) if signatures_dir else protocol_path.parent
    pairs = parse_comparison_list(protocol_path.read_bytes(), task)
    finger_schema = finger_schema or schema_for(InputKind.FINGER, schema)
    records: dict[str, SignatureRecord] = {}
    errors: dict[str, str] = {}
    for p in pairs:
        sch = finger_schema if p.task is Task.TASK2_FINGER else schema
        for path in (p.reference_path, p.probe_path):
            if path in records or path in errors:
                continue
            try:
                records[path] = parse_signature_file(
                    (base / path).read_bytes(), sch, subject_id=_subject_of(path), source_path=path)
            except (OSError, MalformedLine, CountMismatch, EmptyFile) as exc:
                errors[path] = f"{type(exc).__name__}: {exc}"
    if errors:
        raise DatasetErrors(errors)
    return Dataset(records, pairs)


def _subject_of(path: str) -> str:
    return Path(path).stem.split("_")[0]


class DatasetErrors(InvalidParams):
    def __init__(self, errors: Mapping[str, str]):
        self.errors = dict(errors)
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(self.errors.items())))
