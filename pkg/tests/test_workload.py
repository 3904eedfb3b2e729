import math

import numpy as np
import pytest
from scipy import stats

from carbonsched.workload import (
    MINUTES_PER_DAY,
    TraceFormatError,
    TraceRow,
    constant_row,
    function_arrivals,
    load_trace,
    synthesize,
    synthetic_constant,
    write_trace,
)

from conftest import FIXTURES


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_all_zero_row_yields_no_arrivals(tmp_path):
    p = _write(tmp_path / "t.csv", ["fnZ," + ",".join(["0"] * 1440)])
    rows = load_trace(p)
    assert synthesize(rows, 0, 1440, seed=1) == []


def test_short_row_reports_line_and_arity(tmp_path):
    p = _write(tmp_path / "t.csv", ["fnA," + ",".join(["60"] * 1440), "fnB," + ",".join(["1"] * 1439)])
    with pytest.raises(TraceFormatError, match=r"t\.csv:2: expected 1441 columns, got 1440"):
        load_trace(p)


def test_bad_values(tmp_path):
    with pytest.raises(TraceFormatError, match="negative"):
        load_trace(_write(tmp_path / "n.csv", ["f," + ",".join(["-1"] + ["0"] * 1439)]))
    with pytest.raises(TraceFormatError, match=":1:"):
        load_trace(_write(tmp_path / "x.csv", ["f," + ",".join(["a"] + ["0"] * 1439)]))


def test_round_trip_with_header(tmp_path):
    rows = [constant_row("a", 5, 3, 10), constant_row("b", 0, 1)]
    write_trace(tmp_path / "t.csv", rows)
    assert load_trace(tmp_path / "t.csv") == rows


def test_bundled_trace_loads():
    rows = load_trace(f"{FIXTURES}/traces/azure_sample.csv")
    assert len(rows) == 4 and all(len(r.per_minute_counts) == MINUTES_PER_DAY for r in rows)


def test_arrivals_stay_in_window_and_sorted():
    arr = synthesize([constant_row("f", 30, 5, 100)], 100, 5, seed=3)
    ts = [t for t, _ in arr]
    assert ts == sorted(ts)
    assert 0 <= ts[0] and ts[-1] < 5 * 60_000


def test_merged_streams_keep_per_function_substreams():
    a, b = constant_row("a", 40, 10), constant_row("b", 25, 10)
    merged = synthesize([a, b], 0, 10, seed=9)
    only_a = synthesize([a], 0, 10, seed=9)
    assert [t for t, f in merged if f == "a"] == [t for t, _ in only_a]
    assert np.array_equal(function_arrivals(b, 0, 10, 9), np.array([t for t, f in merged if f == "b"]))


def test_seed_changes_stream():
    assert synthetic_constant(60, 2, 1) != synthetic_constant(60, 2, 2)
    assert synthetic_constant(60, 2, 1) == synthetic_constant(60, 2, 1)


def test_count_variance_matches_poisson():
    counts = np.array([len(synthetic_constant(30, 1, s)) for s in range(2000)])
    assert counts.mean() == pytest.approx(30, rel=0.03)
    assert counts.var() / counts.mean() == pytest.approx(1.0, abs=0.12)


def test_gaps_exponential():
    arr = np.array([t for t, _ in synthetic_constant(120, 10, 4)])
    gaps = np.diff(arr)
    assert stats.kstest(gaps, "expon", args=(0, 500.0)).pvalue > 0.01


def test_trace_row_validation():
    with pytest.raises(TraceFormatError):
        TraceRow("f", (1, 2, 3))
    with pytest.raises(ValueError):
        synthetic_constant(-1, 1, 0)
    with pytest.raises(ValueError):
        synthesize([constant_row("f", 1, 1)], 1439, 2)
