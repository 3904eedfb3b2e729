"""Per-minute invocation traces and Poisson arrival synthesis."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .rng import stream

MINUTES_PER_DAY = 1440
MINUTE_MS = 60_000.0


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRow:
    function_id: str
    per_minute_counts: Tuple[int, ...]

    def __post_init__(self):
        if len(self.per_minute_counts) != MINUTES_PER_DAY:
            raise TraceFormatError(
                f"{self.function_id}: expected {MINUTES_PER_DAY} counts, got {len(self.per_minute_counts)}")
        if any(c < 0 for c in self.per_minute_counts):
            raise TraceFormatError(f"{self.function_id}: negative count")


ArrivalStream = List[Tuple[float, str]]


def load_trace(path) -> List[TraceRow]:
    """Parse ``function_id,m1,...,m1440`` rows; a header row is optional."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or (lineno == 1 and rec[0] == "function_id"):
                continue
            if len(rec) != MINUTES_PER_DAY + 1:
                raise TraceFormatError(
                    f"{path}:{lineno}: expected {MINUTES_PER_DAY + 1} columns, got {len(rec)}")
            try:
                counts = tuple(int(x) for x in rec[1:])
            except ValueError as e:
                raise TraceFormatError(f"{path}:{lineno}: {e}") from None
            if any(c < 0 for c in counts):
                raise TraceFormatError(f"{path}:{lineno}: negative count")
            rows.append(TraceRow(rec[0], counts))
    return rows


def write_trace(path, rows: Iterable[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function_id"] + [f"m{i}" for i in range(1, MINUTES_PER_DAY + 1)])
        for r in rows:
            w.writerow([r.function_id, *r.per_minute_counts])


def constant_row(function_id: str, rate_per_min: int, window_minutes: int, start_minute: int = 0) -> TraceRow:
    if rate_per_min < 0:
        raise ValueError("rate must be >= 0")
    counts = [0] * MINUTES_PER_DAY
    for m in range(start_minute, start_minute + window_minutes):
        counts[m] = int(rate_per_min)
    return TraceRow(function_id, tuple(counts))


def _minute_arrivals(rng: np.random.Generator, rate: float) -> np.ndarray:
    """Poisson process of ``rate`` events/min restricted to one minute, in ms offsets."""
    mean_gap = MINUTE_MS / rate
    chunk = int(rate + 6.0 * np.sqrt(rate) + 8)
    times = np.cumsum(rng.exponential(mean_gap, size=chunk))
    while times[-1] < MINUTE_MS:
        more = times[-1] + np.cumsum(rng.exponential(mean_gap, size=chunk))
        times = np.concatenate([times, more])
    return times[times < MINUTE_MS]


def function_arrivals(row: TraceRow, window_start_minute: int, window_minutes: int, seed: int) -> np.ndarray:
    rng = stream(seed, "arrivals", row.function_id)
    parts = []
    for k in range(window_minutes):
        c = row.per_minute_counts[window_start_minute + k]
        if c > 0:
            parts.append(k * MINUTE_MS + _minute_arrivals(rng, c))
    return np.concatenate(parts) if parts else np.empty(0)


def synthesize(rows: Sequence[TraceRow], window_start_minute: int = 0, window_minutes: int = 10,
               seed: int = 0) -> ArrivalStream:
    if not (0 <= window_start_minute and window_start_minute + window_minutes <= MINUTES_PER_DAY
            and window_minutes >= 0):
        raise ValueError("window must lie within the 1440-minute day")
    out: ArrivalStream = []
    for row in rows:
        out += [(float(t), row.function_id) for t in function_arrivals(row, window_start_minute, window_minutes, seed)]
    out.sort()
    return out


def synthetic_constant(rate_per_min: float, window_minutes: int, seed: int,
                       function_id: str = "fn") -> ArrivalStream:
    if rate_per_min < 0:
        raise ValueError("rate must be >= 0")
    row = TraceRow(function_id, tuple([rate_per_min] * window_minutes + [0] * (MINUTES_PER_DAY - window_minutes)))
    return synthesize([row], 0, window_minutes, seed)
