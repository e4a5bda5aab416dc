import pytest
from hypothesis import given
from hypothesis import strategies as st

from sigvlm.baseline_dtw import dtw_score
from sigvlm.errors import CountMismatch, EmptyFile, InvalidParams, MalformedLine
from sigvlm.signal_model import InputKind, SamplePoint, SignatureRecord
from sigvlm.svc_ingest import (
    Column,
    ColumnSchema,
    Delimiter,
    Label,
    Task,
    format_comparison_list,
    format_signature_file,
    load_dataset,
    parse_comparison_list,
    parse_signature_file,
    synth_dataset,
    write_dataset,
)

XYT = ColumnSchema((Column.X, Column.Y, Column.T), has_count_header=False, delimiter=Delimiter.COMMA)


def test_parse_with_header():
    rec = parse_signature_file(b"2\n10 20 0 512\n11 21 10 600\n")
    assert rec.input_kind is InputKind.STYLUS
    assert [(s.x, s.y, s.t, s.p) for s in rec.sample_points] == [(10, 20, 0, 512), (11, 21, 10, 600)]


def test_parse_count_mismatch():
    with pytest.raises(CountMismatch):
        parse_signature_file(b"3\n10 20 0 512\n11 21 10 600\n")


def test_parse_missing_pressure_is_finger():
    rec = parse_signature_file(b"10,20,0\n", XYT)
    assert rec.input_kind is InputKind.FINGER
    assert rec.sample_points[0].p == 0


def test_parse_malformed_reports_line():
    with pytest.raises(MalformedLine) as err:
        parse_signature_file(b"2\n10 20 0 512\n11 abc 10 600\n")
    assert err.value.line_no == 3


def test_parse_wrong_field_count():
    with pytest.raises(MalformedLine):
        parse_signature_file(b"1\n10 20 0\n")


@pytest.mark.parametrize("data", [b"", b"\n\n", b"0\n"])
def test_parse_empty(data):
    with pytest.raises(EmptyFile):
        parse_signature_file(data)


def test_parse_ignore_and_pen_state():
    schema = ColumnSchema((Column.T, Column.X, Column.Y, Column.IGNORE, Column.PEN_STATE), False)
    rec = parse_signature_file(b"0 1 2 99 1\n10 3 4 99 0\n", schema)
    assert [(s.x, s.y, s.t, s.pen_down) for s in rec.sample_points] == [(1, 2, 0, True), (3, 4, 10, False)]


def test_schema_requires_xy():
    with pytest.raises(InvalidParams):
        ColumnSchema((Column.X, Column.T))
    with pytest.raises(InvalidParams):
        ColumnSchema((Column.X, Column.Y, Column.P, Column.P))


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(finite, finite, st.floats(0, 100), st.floats(0, 2000)), min_size=1, max_size=25),
       st.sampled_from([ColumnSchema(), ColumnSchema(delimiter=Delimiter.COMMA, has_count_header=False)]))
def test_round_trip(rows, schema):
    t = 0.0
    pts = []
    for x, y, dt, p in rows:
        t += dt
        pts.append(SamplePoint(x, y, t, p))
    rec = SignatureRecord("s", tuple(pts), InputKind.STYLUS, "f.txt")
    again = parse_signature_file(format_signature_file(rec, schema), schema, "s", "f.txt")
    assert again == rec


def test_protocol_labels():
    pairs = parse_comparison_list(
        b"u1_g1.txt u1_g2.txt genuine\nu1_g1.txt u2_g1.txt random\nu1_g1.txt u1_f1.txt\n"
    )
    assert [p.label for p in pairs] == [Label.GENUINE, Label.RANDOM, Label.UNLABELED]
    assert [p.pair_id for p in pairs] == ["000000", "000001", "000002"]


def test_protocol_comments_and_order():
    data = b"# header\n\na b skilled\nc d random task2\n"
    pairs = parse_comparison_list(data)
    assert [(p.pair_id, p.reference_path, p.task) for p in pairs] == [
        ("000002", "a", Task.TASK1_STYLUS), ("000003", "c", Task.TASK2_FINGER)]


def test_protocol_malformed():
    with pytest.raises(MalformedLine):
        parse_comparison_list(b"a b maybe\n")
    with pytest.raises(MalformedLine):
        parse_comparison_list(b"onlyone\n")


def test_protocol_duplicate_paths_allowed():
    pairs = parse_comparison_list(b"a b genuine\na c random\n")
    assert len(pairs) == 2


def test_protocol_round_trip():
    pairs = parse_comparison_list(b"a b genuine task2\nc d\ne f skilled\n")
    assert parse_comparison_list(format_comparison_list(pairs)) == pairs


def test_synth_small():
    ds = synth_dataset(42, 2, 2, 1)
    genuine = [p for p in ds.records if "_g" in p]
    skilled = [p for p in ds.records if "_s" in p]
    assert len(genuine) == 4 and len(skilled) == 2
    assert {p.label for p in ds.pairs} == {Label.GENUINE, Label.SKILLED, Label.RANDOM}
    for p in ds.pairs:
        assert p.reference_path in ds.records and p.probe_path in ds.records
    assert ds.task_counts == {Task.TASK1_STYLUS: len(ds.pairs)}


def test_synth_deterministic(tmp_path):
    write_dataset(synth_dataset(42, 3, 3, 2), tmp_path / "a")
    write_dataset(synth_dataset(42, 3, 3, 2), tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for f in files_a:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_seed_matters():
    a = synth_dataset(1, 2, 2, 1)
    b = synth_dataset(2, 2, 2, 1)
    assert a.records != b.records


@pytest.mark.parametrize("args", [(7, 1, 2, 1), (7, 3, 1, 1), (7, 3, 2, -1)])
def test_synth_invalid(args):
    with pytest.raises(InvalidParams):
        synth_dataset(*args)


def test_synth_finger_kind():
    ds = synth_dataset(5, 2, 2, 1, kinds=(InputKind.STYLUS, InputKind.FINGER))
    finger = [r for r in ds.records.values() if r.input_kind is InputKind.FINGER]
    assert finger and all(s.p == 0 for r in finger for s in r.sample_points)
    assert set(ds.task_counts) == {Task.TASK1_STYLUS, Task.TASK2_FINGER}


def test_synth_stylus_pressure_positive_when_down():
    ds = synth_dataset(5, 2, 2, 1)
    for r in ds.records.values():
        assert any(s.p > 0 for s in r.sample_points)


def test_write_and_load(tmp_path):
    ds = synth_dataset(3, 2, 2, 1, kinds=(InputKind.STYLUS, InputKind.FINGER))
    protocol = write_dataset(ds, tmp_path)
    loaded = load_dataset(protocol)
    assert loaded.pairs == ds.pairs
    assert loaded.records.keys() == ds.records.keys()
    for k, rec in ds.records.items():
        assert loaded.records[k].sample_points == rec.sample_points
        assert loaded.records[k].input_kind is rec.input_kind


def test_synth_separation():
    """Genuine pairs sit closer than random ones under the DTW baseline."""
    for seed in (0, 42):
        ds = synth_dataset(seed, 4, 3, 2)
        by_label = {Label.GENUINE: [], Label.RANDOM: []}
        for p in ds.pairs:
            if p.label in by_label:
                by_label[p.label].append(dtw_score(ds.records[p.reference_path], ds.records[p.probe_path]))
        mean = {k: sum(v) / len(v) for k, v in by_label.items()}
        assert mean[Label.GENUINE] > mean[Label.RANDOM]
