import math
import threading

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from carbonsched.carbon import (
    CARBONSDK,
    G_PER_KWH,
    LBS_PER_MWH,
    CachedCarbonSource,
    CarbonFetchError,
    Constant,
    HTTPFetchError,
    HttpProvider,
    MalformedBodyError,
    MOERSample,
    ScoreTableError,
    Sinusoid,
    SyntheticProvider,
    TraceCoverageError,
    TraceProvider,
    UnknownUnitsError,
    build_score_table,
    convert_to_g_per_kwh,
    convert_to_lbs_per_mwh,
    load_carbon_trace,
    normalize_scores,
    parse_carbonsdk_body,
    parse_watttime_body,
    write_carbon_trace,
)
from carbonsched.mock_api import MockCarbonAPI


class CountingProvider(SyntheticProvider):
    def __init__(self, value=100.0):
        super().__init__({}, G_PER_KWH)
        self.value = value
        self.per_region = {}

    def fetch(self, region_id, now):
        self.per_region[region_id] = self.per_region.get(region_id, 0) + 1
        return MOERSample(region_id, now, self.value, G_PER_KWH)


class DownProvider(SyntheticProvider):
    def __init__(self):
        super().__init__({})

    def fetch(self, region_id, now):
        raise CarbonFetchError("unreachable")


# ---------------------------------------------------------------- conversion

def test_convert_examples():
    assert convert_to_g_per_kwh(MOERSample("a", 0, 1000, LBS_PER_MWH)).value == pytest.approx(453.59237, rel=1e-15)
    assert convert_to_g_per_kwh(MOERSample("a", 0, 0, LBS_PER_MWH)).value == 0.0
    # 100 / 0.45359237 lbs/MWh is exactly 100 g/kWh.
    assert convert_to_g_per_kwh(MOERSample("a", 0, 220.46226218487757, LBS_PER_MWH)).value == pytest.approx(100.0, rel=1e-12)


def test_convert_preserves_identity_fields():
    s = convert_to_g_per_kwh(MOERSample("es", 123.0, 10.0, LBS_PER_MWH))
    assert (s.region_id, s.point_time, s.unit) == ("es", 123.0, G_PER_KWH)
    same = MOERSample("es", 1.0, 5.0, G_PER_KWH)
    assert convert_to_g_per_kwh(same) is same


@given(st.floats(min_value=0, max_value=1e7, allow_nan=False))
def test_conversion_round_trip(v):
    back = convert_to_lbs_per_mwh(convert_to_g_per_kwh(MOERSample("r", 0, v, LBS_PER_MWH))).value
    assert back == pytest.approx(v, rel=1e-9, abs=1e-300)


def test_unknown_unit_rejected():
    with pytest.raises(UnknownUnitsError):
        MOERSample("a", 0, 1.0, "furlongs")


# ---------------------------------------------------------------- cache

@pytest.mark.parametrize("t2,fetches", [(299.0, 1), (300.0, 1), (301.0, 2)])
def test_cache_ttl_boundary(t2, fetches):
    p = CountingProvider()
    c = CachedCarbonSource(p)
    c.fetch_cached("es", 0.0)
    c.fetch_cached("es", t2)
    assert p.per_region["es"] == fetches


def test_cache_is_per_region():
    p = CountingProvider()
    c = CachedCarbonSource(p)
    c.fetch_cached("es", 0.0)
    c.fetch_cached("fr", 0.0)
    assert p.per_region == {"es": 1, "fr": 1}


def test_cache_returns_converted_sample():
    p = SyntheticProvider({"es": Constant(1000.0)}, LBS_PER_MWH)
    s = CachedCarbonSource(p).fetch_cached("es", 0.0)
    assert s.unit == G_PER_KWH and s.value == pytest.approx(453.59237)


@settings(max_examples=200)
@given(st.lists(st.floats(min_value=0, max_value=5000, allow_nan=False), min_size=1, max_size=60))
def test_cache_at_most_one_fetch_per_closed_window(times):
    times = sorted(times)
    fetched_at = []

    class P(CountingProvider):
        def fetch(self, region_id, now):
            fetched_at.append(now)
            return super().fetch(region_id, now)

    c = CachedCarbonSource(P())
    for t in times:
        c.fetch_cached("es", t)
    for a, b in zip(fetched_at, fetched_at[1:]):
        assert b - a > 300.0


def test_cache_single_inflight_fetch_under_threads():
    barrier = threading.Barrier(16)

    class Slow(CountingProvider):
        def fetch(self, region_id, now):
            import time
            time.sleep(0.05)
            return super().fetch(region_id, now)

    p = Slow()
    c = CachedCarbonSource(p)

    def go():
        barrier.wait()
        c.fetch_cached("es", 10.0)

    ts = [threading.Thread(target=go) for _ in range(16)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert p.per_region["es"] == 1


# ---------------------------------------------------------------- normalization

def test_normalize_four_region_example():
    t = normalize_scores({"spain": 150, "france": 200, "belgium": 250, "netherlands": 300})
    got = {r: e.score for r, e in t.entries.items()}
    # 100 * (300 - x) / 150 by hand
    assert got == pytest.approx({"spain": 100.0, "france": 200 / 3, "belgium": 100 / 3, "netherlands": 0.0})


def test_normalize_degenerate():
    assert normalize_scores({"a": 42}).entries["a"].score == 100.0
    assert {e.score for e in normalize_scores({"a": 10, "b": 10, "c": 10}).entries.values()} == {100.0}


@pytest.mark.parametrize("raw", [{}, {"a": -1.0}, {"a": math.inf}, {"a": math.nan}])
def test_normalize_rejects(raw):
    with pytest.raises(ValueError):
        normalize_scores(raw)


raw_maps = st.dictionaries(st.sampled_from("abcdefgh"), st.floats(min_value=0, max_value=2000, allow_nan=False),
                           min_size=1, max_size=8)


@given(raw_maps)
def test_normalize_range_and_extremes(raw):
    t = normalize_scores(raw)
    scores = {r: e.score for r, e in t.entries.items()}
    assert all(0.0 <= s <= 100.0 for s in scores.values())
    lo, hi = min(raw.values()), max(raw.values())
    if hi > lo:
        for r, v in raw.items():
            if v == lo:
                assert scores[r] == 100.0
            if v == hi:
                assert scores[r] == 0.0


@given(st.dictionaries(st.sampled_from("abcdefgh"), st.integers(min_value=0, max_value=2000), min_size=1, max_size=8))
def test_normalize_strict_order_reversal(raw):
    t = normalize_scores(raw)
    for a, va in raw.items():
        for b, vb in raw.items():
            if va < vb:
                assert t.entries[a].score > t.entries[b].score


@given(raw_maps, st.floats(min_value=1e-3, max_value=1e3), st.floats(min_value=0, max_value=1e3))
def test_normalize_affine_ranking_invariance(raw, a, b):
    assume(len(set(raw.values())) == len(raw))
    t1 = normalize_scores(raw)
    t2 = normalize_scores({k: a * v + b for k, v in raw.items()})
    rank1 = sorted(raw, key=lambda r: -t1.entries[r].score)
    rank2 = sorted(raw, key=lambda r: -t2.entries[r].score)
    assert rank1 == rank2


def test_score_table_all_or_nothing():
    with pytest.raises(ScoreTableError) as ei:
        build_score_table(CachedCarbonSource(DownProvider()), ["es", "fr"], 0.0)
    assert ei.value.failed_regions == ["es", "fr"]


# ---------------------------------------------------------------- providers

def test_sinusoid_clamped_and_time_average():
    s = Sinusoid(100.0, 40.0, 3600.0)
    assert s.at(900.0) == pytest.approx(140.0)
    assert Sinusoid(10.0, 40.0, 3600.0).at(2700.0) == 0.0
    p = SyntheticProvider({"r": s})
    exact = p.time_average("r", 100.0, 1900.0)
    numeric = super(SyntheticProvider, p).time_average("r", 100.0, 1900.0)
    assert exact == pytest.approx(numeric, rel=1e-6)


def test_trace_provider_step_interpolation(tmp_path):
    samples = [MOERSample("es", 0, 100.0), MOERSample("es", 300, 200.0), MOERSample("fr", 0, 1000.0, LBS_PER_MWH)]
    path = tmp_path / "c.csv"
    write_carbon_trace(path, samples)
    p = TraceProvider.from_csv(path)
    assert p.fetch("es", 299.9).value == 100.0
    assert p.fetch("es", 300.0).value == 200.0
    assert p.fetch("es", 10_000).value == 200.0
    assert p.fetch("fr", 5).value == pytest.approx(453.59237)
    # 100 for 300 s then 200 for 300 s
    assert p.time_average("es", 0, 600) == pytest.approx(150.0)
    assert p.time_average("es", 150, 450) == pytest.approx(150.0)
    with pytest.raises(TraceCoverageError):
        p.fetch("es", -1)
    assert p.validate(["es", "be"], 0, 600) == [f"carbon trace {path}: no samples for region 'be'"]
    assert load_carbon_trace(path)[0].region_id == "es"


def test_trace_file_bad_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("a,b,c,d\n")
    with pytest.raises(ValueError):
        load_carbon_trace(path)


# ---------------------------------------------------------------- wire formats

def test_parse_watttime_body():
    s = parse_watttime_body('{"region": "ES", "point_time": "2023-05-01T00:00:00Z", "value": 900, "units": "lbs_co2_per_mwh"}')
    assert (s.region_id, s.value, s.unit) == ("ES", 900.0, LBS_PER_MWH)
    assert s.point_time == 1682899200.0


def test_parse_carbonsdk_body():
    s = parse_carbonsdk_body({"location": "FR", "time": "2023-05-01T00:05:00+00:00", "rating": 120})
    assert (s.region_id, s.value, s.unit) == ("FR", 120.0, G_PER_KWH)


def test_parse_errors_are_distinct():
    with pytest.raises(UnknownUnitsError):
        parse_watttime_body({"region": "ES", "point_time": 0, "value": 1, "units": "furlongs"})
    with pytest.raises(MalformedBodyError):
        parse_watttime_body("not json")
    with pytest.raises(MalformedBodyError):
        parse_watttime_body({"region": "ES", "point_time": 0, "value": -3, "units": "lbs_co2_per_mwh"})
    with pytest.raises(MalformedBodyError):
        parse_carbonsdk_body({"location": "FR", "rating": 1})
    assert not issubclass(UnknownUnitsError, MalformedBodyError)
    assert not issubclass(HTTPFetchError, MalformedBodyError)


@pytest.mark.parametrize("fmt", ["watttime", CARBONSDK])
def test_http_provider_against_mock(fmt):
    src = SyntheticProvider({"ES": Constant(900.0)}, LBS_PER_MWH)
    with MockCarbonAPI(src, fmt, clock=lambda: 1_700_000_000.0, token="t0k") as api:
        p = HttpProvider(api.url, fmt, token="t0k")
        raw = p.http_fetch("ES")
        assert raw.region_id == "ES"
        assert convert_to_g_per_kwh(raw).value == pytest.approx(900 * 0.45359237)
        assert p.fetch("ES", 0).value == pytest.approx(900 * 0.45359237)
        with pytest.raises(HTTPFetchError):
            HttpProvider(api.url, fmt, token="wrong").http_fetch("ES")
        api.fail_with = 503
        with pytest.raises(HTTPFetchError):
            p.http_fetch("ES")


def test_http_provider_region_codes_and_unreachable():
    src = SyntheticProvider({"ES": Constant(120.0)})
    with MockCarbonAPI(src, CARBONSDK) as api:
        p = HttpProvider(api.url, CARBONSDK, region_codes={"spain": "ES"})
        assert p.fetch("spain", 0).region_id == "spain"
        url = api.url
    with pytest.raises(HTTPFetchError):
        HttpProvider(url, CARBONSDK, timeout=0.5).http_fetch("ES")
