import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctxauth.traceio import (EmptyTrace, GroundTruth, MalformedRow, NonMonotonicTime, SchemaVersionMismatch,
                             SerializationError, load_ground_truth, load_profile, load_trace, make_trace,
                             save_ground_truth, save_trace)

HEADER = "t_ms,x,y,z,screen_on\n"


def write(tmp_path, body, name="u1.csv"):
    p = tmp_path / name
    p.write_text(body, encoding="utf-8")
    return p


def test_two_rows(tmp_path):
    tr = load_trace(write(tmp_path, HEADER + "0,0,0,9.8,1\n50,0,0,9.8,1\n"))
    assert len(tr) == 2
    assert tr.duration_ms == 50
    assert tr.user_id == "u1"
    assert tr.screen_on.tolist() == [True, True]
    np.testing.assert_array_equal(tr.z, [9.8, 9.8])


def test_empty_file(tmp_path):
    with pytest.raises(EmptyTrace):
        load_trace(write(tmp_path, ""))
    with pytest.raises(EmptyTrace):
        load_trace(write(tmp_path, HEADER, "h.csv"))


def test_decreasing_time_reports_line(tmp_path):
    with pytest.raises(NonMonotonicTime) as err:
        load_trace(write(tmp_path, HEADER + "100,0,0,0,0\n50,0,0,0,0\n"))
    assert err.value.line == 3


def test_malformed_row(tmp_path):
    with pytest.raises(MalformedRow) as err:
        load_trace(write(tmp_path, HEADER + "0,0,0,0,1\n50,abc,0,0,1\n"))
    assert err.value.line == 3
    with pytest.raises(MalformedRow):
        load_trace(write(tmp_path, HEADER + "0,nan,0,0,1\n", "n.csv"))
    with pytest.raises(MalformedRow):
        load_trace(write(tmp_path, HEADER + "0,0,0\n", "s.csv"))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_trace(tmp_path / "nope.csv")


def test_duplicates_keep_last(tmp_path):
    tr = load_trace(write(tmp_path, HEADER + "0,1,0,0,1\n0,2,0,0,0\n10,3,0,0,1\n"))
    assert tr.t.tolist() == [0, 10]
    assert tr.x.tolist() == [2.0, 3.0]
    assert tr.duplicates_collapsed == 1


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    t = np.cumsum(rng.integers(1, 100, 50))
    tr = make_trace("a", t, rng.normal(size=50), rng.normal(size=50), rng.normal(size=50), rng.uniform(size=50) < .5)
    save_trace(tr, tmp_path / "a.csv")
    back = load_trace(tmp_path / "a.csv")
    for col in ("t", "x", "y", "z", "screen_on"):
        np.testing.assert_array_equal(getattr(back, col), getattr(tr, col))


def test_ground_truth_roundtrip(tmp_path):
    gt = GroundTruth(np.array([0, 5, 9]), np.array([True, False, True]), np.array([1, -1, 0]))
    save_ground_truth(gt, tmp_path / "g.csv")
    back = load_ground_truth(tmp_path / "g.csv")
    assert back.t.tolist() == [0, 5, 9]
    assert back.attended.tolist() == [True, False, True]
    assert back.context.tolist() == [1, -1, 0]


def test_profile_schema_errors(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"schema_version": 99, "profile": {}}))
    with pytest.raises(SchemaVersionMismatch):
        load_profile(p)
    p.write_text('{"schema_version": 1, "profile": {"user_')
    with pytest.raises(SerializationError):
        load_profile(p)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10_000), st.floats(-50, 50), st.booleans()), min_size=1, max_size=40))
def test_loaded_time_strictly_increasing(tmp_path_factory, rows):
    rows = sorted(rows, key=lambda r: r[0])
    body = HEADER + "".join(f"{t},{v!r},0,0,{int(s)}\n" for t, v, s in rows)
    path = tmp_path_factory.mktemp("h") / "t.csv"
    path.write_text(body)
    tr = load_trace(path)
    assert np.all(np.diff(tr.t) > 0)
    assert len(tr) == len({r[0] for r in rows})
