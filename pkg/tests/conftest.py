import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sigvlm.signal_model import InputKind, SamplePoint, SignatureRecord  # noqa: E402

DATA = Path(__file__).parent / "data"


def make_record(points, kind=InputKind.STYLUS, subject="s", path="mem"):
    """Build a record from ``(x, y[, t[, p]])`` tuples; t defaults to 10 ms steps."""
    pts = []
    for i, pt in enumerate(points):
        x, y = pt[0], pt[1]
        t = pt[2] if len(pt) > 2 else 10.0 * i
        p = pt[3] if len(pt) > 3 else (0.0 if kind is InputKind.FINGER else 500.0)
        pts.append(SamplePoint(x, y, t, p))
    return SignatureRecord(subject, tuple(pts), kind, path)


@pytest.fixture
def replay_dir():
    return DATA / "replay"


# acceptance criteria report their outcome here; printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, title, seconds, detail = ACCEPTANCE[num]
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.2f} s)"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
