"""MOER acquisition, unit handling, the per-region score cache and min-max scoring."""
from __future__ import annotations

import bisect
import csv
import json
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

LBS_PER_MWH = "lbs_per_MWh"
G_PER_KWH = "g_per_kWh"
UNITS = (LBS_PER_MWH, G_PER_KWH)

# 1 lb = 453.59237 g and 1 MWh = 1000 kWh
LBS_PER_MWH_TO_G_PER_KWH = 0.45359237

DEFAULT_TTL_S = 300.0


class CarbonFetchError(RuntimeError):
    """A provider could not deliver a sample."""


class HTTPFetchError(CarbonFetchError):
    pass


class MalformedBodyError(CarbonFetchError):
    pass


class UnknownUnitsError(CarbonFetchError):
    pass


class TraceCoverageError(CarbonFetchError):
    pass


class ScoreTableError(CarbonFetchError):
    def __init__(self, failed_regions: Sequence[str], causes: Mapping[str, str] = None):
        self.failed_regions = list(failed_regions)
        self.causes = dict(causes or {})
        super().__init__("carbon fetch failed for: " + ", ".join(self.failed_regions))


@dataclass(frozen=True)
class MOERSample:
    region_id: str
    point_time: float
    value: float
    unit: str = G_PER_KWH

    def __post_init__(self):
        if self.unit not in UNITS:
            raise UnknownUnitsError(f"unknown unit {self.unit!r}")
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError(f"MOER value must be finite and >= 0, got {self.value}")


def convert_to_g_per_kwh(sample: MOERSample) -> MOERSample:
    if sample.unit == LBS_PER_MWH:
        return replace(sample, value=sample.value * LBS_PER_MWH_TO_G_PER_KWH, unit=G_PER_KWH)
    return sample


def convert_to_lbs_per_mwh(sample: MOERSample) -> MOERSample:
    if sample.unit == G_PER_KWH:
        return replace(sample, value=sample.value / LBS_PER_MWH_TO_G_PER_KWH, unit=LBS_PER_MWH)
    return sample


# --------------------------------------------------------------------------
# Providers

class CarbonProvider:
    kind = "abstract"

    def fetch(self, region_id: str, now: float) -> MOERSample:
        raise NotImplementedError

    def time_average(self, region_id: str, t0: float, t1: float) -> float:
        """Mean g/kWh over [t0, t1]; falls back to dense sampling."""
        if t1 <= t0:
            return convert_to_g_per_kwh(self.fetch(region_id, t0)).value
        n = 2000
        ts = t0 + (np.arange(n) + 0.5) * (t1 - t0) / n
        return float(np.mean([convert_to_g_per_kwh(self.fetch(region_id, float(t))).value for t in ts]))

    def validate(self, regions: Iterable[str], t0: float, t1: float) -> List[str]:
        return []


@dataclass(frozen=True)
class Constant:
    value: float

    def at(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class Sinusoid:
    base: float
    amplitude: float
    period: float  # seconds

    def at(self, t: float) -> float:
        return max(0.0, self.base + self.amplitude * math.sin(2.0 * math.pi * t / self.period))


def signal_from_dict(d) -> Constant | Sinusoid:
    if isinstance(d, (int, float)):
        return Constant(float(d))
    kind = d.get("kind", "constant")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "sinusoid":
        if float(d["period"]) <= 0:
            raise ValueError("sinusoid period must be > 0")
        return Sinusoid(float(d["base"]), float(d["amplitude"]), float(d["period"]))
    raise ValueError(f"unknown signal kind {kind!r}")


class SyntheticProvider(CarbonProvider):
    kind = "synthetic"

    def __init__(self, signals: Mapping[str, Constant | Sinusoid], unit: str = G_PER_KWH):
        if unit not in UNITS:
            raise UnknownUnitsError(f"unknown unit {unit!r}")
        self.signals = dict(signals)
        self.unit = unit
        self.calls = 0

    def fetch(self, region_id, now):
        self.calls += 1
        try:
            sig = self.signals[region_id]
        except KeyError:
            raise CarbonFetchError(f"no synthetic signal configured for {region_id!r}") from None
        return convert_to_g_per_kwh(MOERSample(region_id, float(now), sig.at(now), self.unit))

    def time_average(self, region_id, t0, t1):
        sig = self.signals[region_id]
        scale = LBS_PER_MWH_TO_G_PER_KWH if self.unit == LBS_PER_MWH else 1.0
        if isinstance(sig, Constant):
            return sig.value * scale
        if t1 > t0 and sig.base >= abs(sig.amplitude):
            w = 2.0 * math.pi / sig.period
            integral = sig.base * (t1 - t0) + sig.amplitude * (math.cos(w * t0) - math.cos(w * t1)) / w
            return integral / (t1 - t0) * scale
        return super().time_average(region_id, t0, t1)

    def validate(self, regions, t0, t1):
        return [f"synthetic carbon: no signal for region {r!r}" for r in regions if r not in self.signals]


class TraceProvider(CarbonProvider):
    """Step-interpolated per-region samples; a value holds until the next sample."""

    kind = "trace"

    def __init__(self, samples: Iterable[MOERSample], path: Optional[str] = None):
        self.path = path
        by_region: Dict[str, List[MOERSample]] = defaultdict(list)
        for s in samples:
            by_region[s.region_id].append(convert_to_g_per_kwh(s))
        self._times: Dict[str, List[float]] = {}
        self._values: Dict[str, List[float]] = {}
        for r, ss in by_region.items():
            ss.sort(key=lambda s: s.point_time)
            self._times[r] = [s.point_time for s in ss]
            self._values[r] = [s.value for s in ss]
        self.calls = 0

    @classmethod
    def from_csv(cls, path) -> "TraceProvider":
        return cls(load_carbon_trace(path), path=str(path))

    @property
    def regions(self) -> List[str]:
        return sorted(self._times)

    def fetch(self, region_id, now):
        self.calls += 1
        times = self._times.get(region_id)
        if not times:
            raise TraceCoverageError(f"carbon trace has no samples for {region_id!r}")
        i = bisect.bisect_right(times, now) - 1
        if i < 0:
            raise TraceCoverageError(f"carbon trace for {region_id!r} starts after t={now}")
        return MOERSample(region_id, times[i], self._values[region_id][i], G_PER_KWH)

    def time_average(self, region_id, t0, t1):
        times, vals = self._times[region_id], self._values[region_id]
        if t1 <= t0:
            return self.fetch(region_id, t0).value
        i = bisect.bisect_right(times, t0) - 1
        if i < 0:
            raise TraceCoverageError(f"carbon trace for {region_id!r} starts after t={t0}")
        total, t = 0.0, t0
        while t < t1:
            nxt = times[i + 1] if i + 1 < len(times) else math.inf
            seg_end = min(nxt, t1)
            total += vals[i] * (seg_end - t)
            t = seg_end
            i += 1
        return total / (t1 - t0)

    def validate(self, regions, t0, t1):
        out = []
        for r in regions:
            times = self._times.get(r)
            if not times:
                out.append(f"carbon trace {self.path}: no samples for region {r!r}")
            elif times[0] > t0:
                out.append(f"carbon trace {self.path}: region {r!r} starts at {times[0]}, after window start {t0}")
            elif times[-1] + DEFAULT_TTL_S < t1:
                out.append(f"carbon trace {self.path}: region {r!r} ends at {times[-1]}, before window end {t1}")
        return out


def load_carbon_trace(path) -> List[MOERSample]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["region", "point_time_epoch_s", "value", "unit"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                out.append(MOERSample(row[0], float(row[1]), float(row[2]), row[3]))
            except (ValueError, UnknownUnitsError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return out


def write_carbon_trace(path, samples: Iterable[MOERSample]) -> None:
    rows = sorted(samples, key=lambda s: (s.region_id, s.point_time))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "point_time_epoch_s", "value", "unit"])
        for s in rows:
            w.writerow([s.region_id, _num(s.point_time), _num(s.value), s.unit])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# --------------------------------------------------------------------------
# HTTP wire formats

WATTTIME = "watttime"
CARBONSDK = "carbonsdk"
_WATTTIME_UNITS = {"lbs_co2_per_mwh": LBS_PER_MWH, "g_co2_per_kwh": G_PER_KWH}


def _parse_time(v) -> float:
    if isinstance(v, bool):
        raise MalformedBodyError(f"bad timestamp {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            dt = datetime.fromisoformat(v.replace("Z", "+00:00"))
        except ValueError:
            raise MalformedBodyError(f"bad timestamp {v!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp()
    raise MalformedBodyError(f"bad timestamp {v!r}")


def _load(body) -> dict:
    if isinstance(body, (bytes, str)):
        try:
            body = json.loads(body)
        except ValueError as e:
            raise MalformedBodyError(f"body is not JSON: {e}") from None
    if isinstance(body, list) and len(body) == 1:
        body = body[0]
    if not isinstance(body, dict):
        raise MalformedBodyError("body must be a JSON object")
    return body


def _number(body, key):
    try:
        v = body[key]
    except KeyError:
        raise MalformedBodyError(f"missing field {key!r}") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
        raise MalformedBodyError(f"field {key!r} must be a non-negative number, got {v!r}")
    return float(v)


def parse_watttime_body(body) -> MOERSample:
    """``{"region", "point_time", "value", "units": "lbs_co2_per_mwh"}``."""
    body = _load(body)
    for k in ("region", "point_time", "value", "units"):
        if k not in body:
            raise MalformedBodyError(f"missing field {k!r}")
    units = body["units"]
    if units not in _WATTTIME_UNITS:
        raise UnknownUnitsError(f"unknown units {units!r}")
    return MOERSample(str(body["region"]), _parse_time(body["point_time"]),
                      _number(body, "value"), _WATTTIME_UNITS[units])


def parse_carbonsdk_body(body) -> MOERSample:
    """``{"location", "time", "rating"}`` with rating in g/kWh."""
    body = _load(body)
    for k in ("location", "time", "rating"):
        if k not in body:
            raise MalformedBodyError(f"missing field {k!r}")
    return MOERSample(str(body["location"]), _parse_time(body["time"]),
                      _number(body, "rating"), G_PER_KWH)


def render_watttime_body(sample: MOERSample) -> dict:
    s = convert_to_lbs_per_mwh(sample)
    return {"region": s.region_id, "point_time": _iso(s.point_time),
            "value": s.value, "units": "lbs_co2_per_mwh"}


def render_carbonsdk_body(sample: MOERSample) -> dict:
    s = convert_to_g_per_kwh(sample)
    return {"location": s.region_id, "time": _iso(s.point_time), "rating": s.value}


def _iso(t: float) -> str:
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat().replace("+00:00", "Z")


class HttpProvider(CarbonProvider):
    """Client for a watttime-like or carbonsdk-like endpoint.

    watttime-like: ``GET {endpoint}?region=<code>``;
    carbonsdk-like: ``GET {endpoint}?location=<code>``.
    A static token is sent as ``Authorization: Bearer <token>``.
    """

    kind = "http"

    def __init__(self, endpoint: str, wire_format: str = WATTTIME, token: str = None,
                 region_codes: Mapping[str, str] = None, timeout: float = 5.0, session=None):
        if wire_format not in (WATTTIME, CARBONSDK):
            raise ValueError(f"unknown wire format {wire_format!r}")
        import requests

        self.endpoint = endpoint
        self.wire_format = wire_format
        self.token = token
        self.region_codes = dict(region_codes or {})
        self.timeout = timeout
        self.session = session or requests.Session()
        self._requests = requests
        self.calls = 0

    def http_fetch(self, region_id: str) -> MOERSample:
        self.calls += 1
        code = self.region_codes.get(region_id, region_id)
        param = "region" if self.wire_format == WATTTIME else "location"
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = self.session.get(self.endpoint, params={param: code}, headers=headers,
                                    timeout=self.timeout)
        except self._requests.RequestException as e:
            raise HTTPFetchError(f"{self.endpoint}: {e}") from None
        if resp.status_code != 200:
            raise HTTPFetchError(f"{self.endpoint}: HTTP {resp.status_code}")
        parse = parse_watttime_body if self.wire_format == WATTTIME else parse_carbonsdk_body
        sample = parse(resp.content)
        return replace(sample, region_id=region_id) if code != region_id else sample

    def fetch(self, region_id, now):
        return convert_to_g_per_kwh(self.http_fetch(region_id))

    def time_average(self, region_id, t0, t1):
        return self.fetch(region_id, t0).value


# --------------------------------------------------------------------------
# Cache and scores

class CachedCarbonSource:
    """Per-region sample cache; a sample is reused while its age is <= ttl_s."""

    def __init__(self, provider: CarbonProvider, ttl_s: float = DEFAULT_TTL_S):
        self.provider = provider
        self.ttl_s = float(ttl_s)
        self._cache: Dict[str, tuple] = {}
        self._guard = threading.Lock()
        self._region_locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)
        self.fetches: Dict[str, int] = defaultdict(int)

    def _fresh(self, region_id, now):
        hit = self._cache.get(region_id)
        if hit is not None and 0 <= now - hit[0] <= self.ttl_s:
            return hit[1]
        return None

    def fetch_cached(self, region_id: str, now: float) -> MOERSample:
        with self._guard:
            sample = self._fresh(region_id, now)
            if sample is not None:
                return sample
            lock = self._region_locks[region_id]
        with lock:
            with self._guard:
                sample = self._fresh(region_id, now)
                if sample is not None:
                    return sample
            self.fetches[region_id] += 1
            sample = convert_to_g_per_kwh(self.provider.fetch(region_id, now))
            with self._guard:
                self._cache[region_id] = (now, sample)
            return sample


@dataclass(frozen=True)
class ScoreEntry:
    raw_g_per_kwh: float
    score: float


@dataclass(frozen=True)
class ScoreTable:
    computed_at: float
    entries: Mapping[str, ScoreEntry] = field(default_factory=dict)

    def score(self, region_id: str) -> float:
        return self.entries[region_id].score


def normalize_scores(raw: Mapping[str, float], computed_at: float = 0.0) -> ScoreTable:
    """Min-max scale onto [0, 100], inverted so the cleanest region scores 100."""
    if not raw:
        raise ValueError("cannot normalize an empty set of intensities")
    for r, v in raw.items():
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"intensity for {r!r} must be finite and >= 0, got {v}")
    lo, hi = min(raw.values()), max(raw.values())
    entries = {}
    for r, v in raw.items():
        if hi > lo:
            # ratio first keeps the extremes at exactly 100 and 0
            s = (hi - v) / (hi - lo) * 100.0
        else:
            s = 100.0
        entries[r] = ScoreEntry(float(v), s)
    return ScoreTable(float(computed_at), entries)


def build_score_table(source: CachedCarbonSource, regions: Sequence[str], now: float) -> ScoreTable:
    """All-or-nothing: any failed region aborts the whole table."""
    raw, failed = {}, {}
    for r in regions:
        try:
            raw[r] = source.fetch_cached(r, now).value
        except CarbonFetchError as e:
            failed[r] = str(e)
    if failed:
        raise ScoreTableError(list(failed), failed)
    return normalize_scores(raw, now)


def provider_from_config(d: Mapping, base_dir=None) -> CarbonProvider:
    import os

    kind = d.get("kind", "synthetic")
    if kind == "synthetic":
        sigs = {r: signal_from_dict(s) for r, s in d.get("signals", {}).items()}
        return SyntheticProvider(sigs, d.get("unit", G_PER_KWH))
    if kind == "trace":
        path = d["path"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return TraceProvider.from_csv(path)
    if kind == "http":
        return HttpProvider(d["endpoint"], d.get("format", WATTTIME), d.get("token"),
                            d.get("region_codes"), float(d.get("timeout_s", 5.0)))
    raise ValueError(f"unknown carbon provider kind {kind!r}")
