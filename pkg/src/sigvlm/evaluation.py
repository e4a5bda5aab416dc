"""EER and DET computation with the task x scenario x channel breakdown.

Conventions: a forgery is falsely matched when its score is ``>= t``; a
genuine comparison is falsely rejected when its score is ``< t``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateSet
from .svc_ingest import ComparisonPair, Label, Task

CHANNELS = ("s_v1", "s_v2", "s_text", "s_dtw")
TASKS = (Task.TASK1_STYLUS, Task.TASK2_FINGER, Task.TASK3_COMBINED)


class Scenario(str, enum.Enum):
    RANDOM = "random"
    SKILLED = "skilled"
    ALL = "all"


SCENARIOS = (Scenario.RANDOM, Scenario.SKILLED, Scenario.ALL)


@dataclass(frozen=True)
class LabeledScore:
    pair_id: str
    score: float
    is_genuine: bool
    scenario: Scenario = Scenario.ALL
    task: Task = Task.TASK1_STYLUS


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    fmr: float
    fnmr: float


def _split(scores: Iterable) -> tuple[np.ndarray, np.ndarray]:
    gen, imp = [], []
    for s in scores:
        if isinstance(s, LabeledScore):
            value, genuine = s.score, s.is_genuine
        else:
            value, genuine = s
        if not math.isfinite(value):
            raise ValueError(f"non-finite score {value}")
        (gen if genuine else imp).append(float(value))
    if not gen or not imp:
        raise DegenerateSet(f"need both classes (genuine={len(gen)}, impostor={len(imp)})")
    return np.sort(np.array(gen)), np.sort(np.array(imp))


def compute_det(scores) -> list[DetPoint]:
    """DET points at every distinct score plus one sentinel on either side.

    ``scores`` holds :class:`LabeledScore` or ``(score, is_genuine)`` tuples.
    """
    gen, imp = _split(scores)
    values = np.unique(np.concatenate([gen, imp]))
    thresholds = np.concatenate([[values[0] - 1.0], values, [values[-1] + 1.0]])
    fmr = (len(imp) - np.searchsorted(imp, thresholds, side="left")) / len(imp)
    fnmr = np.searchsorted(gen, thresholds, side="left") / len(gen)
    return [DetPoint(float(t), float(a), float(b)) for t, a, b in zip(thresholds, fmr, fnmr)]


def eer_from_det(det: Sequence[DetPoint]) -> tuple[float, float]:
    """EER (percent) and threshold at the FMR/FNMR crossing.

    An exact tie is taken as is; otherwise both rates are interpolated
    linearly between the two points that bracket the sign change.
    """
    prev = None
    for pt in det:
        d = pt.fmr - pt.fnmr
        if d == 0:
            return 100.0 * pt.fmr, pt.threshold
        if d < 0:
            if prev is None:
                return 100.0 * pt.fmr, pt.threshold
            d0 = prev.fmr - prev.fnmr
            a = d0 / (d0 - d)
            eer = prev.fmr + a * (pt.fmr - prev.fmr)
            thr = prev.threshold + a * (pt.threshold - prev.threshold)
            return 100.0 * eer, thr
        prev = pt
    raise DegenerateSet("FMR and FNMR never cross")


def compute_eer(scores) -> tuple[float, float]:
    return eer_from_det(compute_det(scores))


# --- breakdown --------------------------------------------------------------

@dataclass
class CellResult:
    task: Task
    scenario: Scenario
    channel: str
    n_genuine: int = 0
    n_impostor: int = 0
    n_excluded: int = 0
    eer: Optional[float] = None
    eer_threshold: Optional[float] = None
    det: list[DetPoint] = field(default_factory=list)
    note: str = ""

    @property
    def empty(self) -> bool:
        return self.eer is None

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "scenario": self.scenario.value,
            "channel": self.channel,
            "n_genuine": self.n_genuine,
            "n_impostor": self.n_impostor,
            "n_excluded": self.n_excluded,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "det": [[p.threshold, p.fmr, p.fnmr] for p in self.det],
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        return cls(
            task=Task(d["task"]),
            scenario=Scenario(d["scenario"]),
            channel=d["channel"],
            n_genuine=d["n_genuine"],
            n_impostor=d["n_impostor"],
            n_excluded=d["n_excluded"],
            eer=d["eer"],
            eer_threshold=d["eer_threshold"],
            det=[DetPoint(*p) for p in d["det"]],
            note=d.get("note", ""),
        )


@dataclass
class EvalReport:
    channels: tuple[str, ...]
    cells: dict[tuple[Task, Scenario, str], CellResult]

    def cell(self, task, scenario, channel) -> CellResult:
        return self.cells[(Task(task), Scenario(scenario), channel)]

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "cells": [c.to_dict() for c in self.cells.values()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        cells = [CellResult.from_dict(c) for c in d["cells"]]
        return cls(tuple(d["channels"]), {(c.task, c.scenario, c.channel): c for c in cells})

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class ScoreRow:
    """One comparison's channel scores joined with its protocol entry."""

    pair_id: str
    task: Task
    label: Label
    scores: Mapping[str, Optional[float]]


def _in_scenario(label: Label, scenario: Scenario) -> bool:
    if label is Label.GENUINE:
        return True
    if scenario is Scenario.ALL:
        return label in (Label.SKILLED, Label.RANDOM)
    return label.value == scenario.value


def breakdown(rows: Sequence[ScoreRow], channels: Sequence[str] = CHANNELS) -> EvalReport:
    """EER and DET for every task x scenario x channel cell.

    Random cells pit genuine pairs against random forgeries, Skilled cells
    against skilled forgeries, and All against both pooled as given.  Pairs
    whose channel score is absent are counted in ``n_excluded``.  A cell
    without both classes stays empty.
    """
    cells = {}
    for task in TASKS:
        task_rows = [r for r in rows if r.task is task and r.label is not Label.UNLABELED]
        for scenario in SCENARIOS:
            members = [r for r in task_rows if _in_scenario(r.label, scenario)]
            for ch in channels:
                cell = CellResult(task, scenario, ch)
                usable = []
                for r in members:
                    v = r.scores.get(ch)
                    if v is None or (isinstance(v, float) and math.isnan(v)):
                        cell.n_excluded += 1
                        continue
                    usable.append((float(v), r.label is Label.GENUINE))
                cell.n_genuine = sum(1 for _, g in usable if g)
                cell.n_impostor = len(usable) - cell.n_genuine
                try:
                    cell.det = compute_det(usable)
                    cell.eer, cell.eer_threshold = eer_from_det(cell.det)
                except DegenerateSet as exc:
                    cell.det = []
                    cell.note = str(exc)
                cells[(task, scenario, ch)] = cell
    return EvalReport(tuple(channels), cells)


# --- report emission --------------------------------------------------------

_SCENARIO_TITLES = {
    Scenario.ALL: "All forgeries",
    Scenario.RANDOM: "Random forgeries",
    Scenario.SKILLED: "Skilled forgeries",
}


def _md(report: EvalReport) -> str:
    out = []
    for scenario in SCENARIOS:
        out.append(f"### {_SCENARIO_TITLES[scenario]} (EER %)")
        out.append("")
        out.append("| Channel | Task 1 | Task 2 | Task 3 |")
        out.append("|---|---:|---:|---:|")
        for ch in report.channels:
            vals = []
            for task in TASKS:
                c = report.cells.get((task, scenario, ch))
                vals.append("--" if c is None or c.empty else f"{c.eer:.2f}")
            out.append(f"| {ch} | " + " | ".join(vals) + " |")
        out.append("")
    return "\n".join(out)


def _det_text(det: Sequence[DetPoint]) -> str:
    return ";".join(f"{p.threshold!r}:{p.fmr!r}:{p.fnmr!r}" for p in det)


def _csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "scenario", "channel", "eer", "eer_threshold",
                "n_genuine", "n_impostor", "n_excluded", "det", "note"])
    for c in report.cells.values():
        w.writerow([c.task.value, c.scenario.value, c.channel,
                    "" if c.eer is None else repr(c.eer),
                    "" if c.eer_threshold is None else repr(c.eer_threshold),
                    c.n_genuine, c.n_impostor, c.n_excluded, _det_text(c.det), c.note])
    return buf.getvalue()


def emit_report(report: EvalReport, fmt: str) -> bytes:
    """Serialize as ``"csv"``, ``"json"`` or ``"md"``; output is byte-stable."""
    fmt = fmt.lower()
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "csv":
        return _csv(report).encode()
    if fmt in ("md", "markdown"):
        return (_md(report) + "\n").encode()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report_csv(data: bytes) -> EvalReport:
    """Inverse of the CSV emitter."""
    rows = list(csv.DictReader(io.StringIO(data.decode())))
    cells = {}
    channels = []
    for r in rows:
        det = []
        if r["det"]:
            for item in r["det"].split(";"):
                t, a, b = item.split(":")
                det.append(DetPoint(float(t), float(a), float(b)))
        c = CellResult(Task(r["task"]), Scenario(r["scenario"]), r["channel"],
                       int(r["n_genuine"]), int(r["n_impostor"]), int(r["n_excluded"]),
                       float(r["eer"]) if r["eer"] else None,
                       float(r["eer_threshold"]) if r["eer_threshold"] else None, det,
                       r.get("note", ""))
        cells[(c.task, c.scenario, c.channel)] = c
        if c.channel not in channels:
            channels.append(c.channel)
    return EvalReport(tuple(channels), cells)


def det_csv(cell: CellResult) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fmr", "fnmr"])
    for p in cell.det:
        w.writerow([repr(p.fmr), repr(p.fnmr)])
    return buf.getvalue().encode()


# --- scores CSV -------------------------------------------------------------

SCORE_COLUMNS = ("pair_id", "task", "label")


def write_scores_csv(rows: Iterable[ScoreRow], channels: Sequence[str]) -> bytes:
    """Scores file; absent scores are empty fields, rows sorted by pair id."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(SCORE_COLUMNS) + list(channels))
    for r in sorted(rows, key=lambda r: r.pair_id):
        vals = [r.scores.get(ch) for ch in channels]
        w.writerow([r.pair_id, r.task.value, r.label.value] + ["" if v is None else repr(float(v)) for v in vals])
    return buf.getvalue().encode()


def read_scores_csv(data: bytes) -> tuple[list[ScoreRow], tuple[str, ...]]:
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    fields = reader.fieldnames or []
    if "pair_id" not in fields:
        raise ValueError("scores CSV lacks a pair_id column")
    channels = tuple(f for f in fields if f not in SCORE_COLUMNS)
    rows = []
    for r in reader:
        scores = {ch: (float(r[ch]) if r[ch] not in ("", None) else None) for ch in channels}
        rows.append(ScoreRow(
            r["pair_id"],
            Task(r["task"]) if r.get("task") else Task.TASK1_STYLUS,
            Label(r["label"]) if r.get("label") else Label.UNLABELED,
            scores,
        ))
    return rows, channels


class JoinError(ValueError):
    def __init__(self, orphans):
        self.orphans = sorted(orphans)
        super().__init__("pair ids not in protocol: " + ", ".join(self.orphans))


def join_with_protocol(rows: Sequence[ScoreRow], pairs: Sequence[ComparisonPair]) -> list[ScoreRow]:
    """Take task and label from the protocol; scores ids must all be known."""
    by_id = {p.pair_id: p for p in pairs}
    orphans = [r.pair_id for r in rows if r.pair_id not in by_id]
    if orphans:
        raise JoinError(orphans)
    return [ScoreRow(r.pair_id, by_id[r.pair_id].task, by_id[r.pair_id].label, r.scores) for r in rows]
