import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctxauth.preprocess import (EmptyAfterFilter, UnattendedThresholds, compute_magnitude, median_filter,
                                preprocess, remove_unattended, running_median, segment_medians)
from ctxauth.synthgen import generate_trace, sample_durations
from ctxauth.traceio import make_trace

from conftest import two_context_spec


def const_segments(values, seg_ms=2500, step=100):
    """One 2.5 s segment per (x, y, z) triple, sampled every ``step`` ms."""
    n = seg_ms // step
    t = np.arange(len(values) * n, dtype=np.int64) * step
    xyz = np.repeat(np.array(values, dtype=float), n, axis=0)
    return make_trace("s", t, xyz[:, 0], xyz[:, 1], xyz[:, 2], np.zeros(len(t), bool))


@pytest.mark.parametrize("xyz, expected", [((3, 4, 0), 5.0), ((0, 0, 0), 0.0), ((1, 2, 2), 3.0)])
def test_magnitude(xyz, expected):
    assert compute_magnitude(*xyz) == expected


def test_default_thresholds():
    th = UnattendedThresholds()
    assert (th.lx, th.ux, th.ly, th.uy, th.lz, th.uz) == (-0.036, 0.035, -0.02, 0.06, -0.22, -0.13)
    assert th.segment_len_ms == 2500


@pytest.mark.parametrize("med, discarded", [((0.0, 0.0, -0.18), True), ((0.0, 0.0, -9.8), False),
                                            ((0.5, 0.0, -0.18), False)])
def test_segment_rule(med, discarded):
    tr = const_segments([med, (1.0, 1.0, 1.0)])
    out = remove_unattended(tr)
    kept_first = out.t[0] == 0
    assert kept_first != discarded


def test_boundary_is_not_inside():
    # strict inequalities: a median exactly on a bound counts as outside
    tr = const_segments([(-0.036, 0.0, -0.18), (1.0, 1.0, 1.0)])
    assert len(remove_unattended(tr)) == len(tr)


def test_all_unattended():
    with pytest.raises(EmptyAfterFilter):
        remove_unattended(const_segments([(0.0, 0.0, -0.18)] * 3))


def test_trailing_partial_segment_evaluated():
    tr = const_segments([(1.0, 1.0, 1.0)])
    t = np.r_[tr.t, 2500, 2600, 2700]
    x = np.r_[tr.x, 0.0, 0.0, 0.0]
    y = np.r_[tr.y, 0.0, 0.0, 0.0]
    z = np.r_[tr.z, -0.18, -0.18, -0.18]
    out = remove_unattended(make_trace("s", t, x, y, z, np.zeros(len(t), bool)))
    assert out.t[-1] < 2500


def test_retained_segments_fail_the_box(two_context_trace):
    trace, _ = two_context_trace
    th = UnattendedThresholds()
    out = remove_unattended(trace, th)
    bounds, meds = segment_medians(trace, th.segment_len_ms)
    kept = set(out.t.tolist())
    for a, b, m in zip(bounds[:-1], bounds[1:], meds):
        inside = bool(th.is_unattended(m.mx, m.my, m.mz))
        assert (trace.t[a] in kept) == (not inside)


def test_median_filter_examples():
    assert running_median([1, 5, 2, 9, 3], 3).tolist() == [1, 2, 5, 3, 3]
    assert running_median([7.0] * 4, 3).tolist() == [7.0] * 4
    assert running_median([4.0], 3).tolist() == [4.0]
    assert running_median([1, 9, 2, 8, 3, 7], 5).tolist() == [1, 9, 3, 7, 3, 7]


def test_median_filter_trace_keeps_time_and_screen():
    tr = const_segments([(1.0, 2.0, 3.0), (4.0, 5.0, 6.0)])
    out = median_filter(tr, 3)
    np.testing.assert_array_equal(out.t, tr.t)
    np.testing.assert_array_equal(out.screen_on, tr.screen_on)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.sampled_from([1, 3, 5, 7]))
def test_running_median_no_invented_values(values, span):
    out = running_median(values, span)
    assert len(out) == len(values)
    h = span // 2
    for i, v in enumerate(out):
        lo, hi = max(0, i - h), min(len(values), i + h + 1)
        assert v in values[lo:hi]


def test_retained_duration_matches_truth():
    spec = two_context_spec(minutes=10.0)
    trace, truth = generate_trace(spec)
    out = remove_unattended(trace)
    dur = sample_durations(trace.t, spec.total_duration_ms)
    attended = dur[truth.attended].sum()
    kept = dur[np.isin(trace.t, out.t)].sum()
    assert abs(kept - attended) <= 0.05 * attended
    assert out.duration_ms <= trace.duration_ms


def test_preprocess_order():
    tr = const_segments([(0.0, 0.0, -0.18), (1.0, 5.0, 1.0)])
    out = preprocess(tr)
    assert out.t[0] == 2500
    assert np.all(out.y == 5.0)
