"""Emission accounting (SCI, weighted-average MOER, fleet energy) and run summaries."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .model import Phase

MS_PER_DAY = 86_400_000
WEIGHTING_MODES = ("launched", "instance_seconds")


@dataclass(frozen=True)
class EmissionInputs:
    E: float  # kWh per day
    I: float  # g/kWh
    R: float  # functional units per day
    M: float = 0.0  # g

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be > 0")
        if self.E < 0 or self.I < 0 or self.M < 0:
            raise ValueError("E, I and M must be >= 0")


@dataclass(frozen=True)
class RegionInstanceCount:
    region_id: str
    instance_count: float
    moer_g_per_kwh: float


def sci(inputs: EmissionInputs) -> float:
    """Grams of CO2 per functional unit."""
    return (inputs.E * inputs.I + inputs.M) / inputs.R


def weighted_moer(counts: Sequence[RegionInstanceCount]) -> float:
    total = math.fsum(c.instance_count for c in counts)
    if total <= 0:
        raise ValueError("weighted MOER needs at least one region with positive weight")
    return math.fsum(c.instance_count * c.moer_g_per_kwh for c in counts) / total


def energy_estimate(cores: float, tdp_w: float, utilization: float, hours: float, ram_gib: float,
                    ram_w_per_8gib: float = 3.0, ram_over_hours: bool = False) -> float:
    """Fleet energy in kWh.

    By default the RAM term is added as watts without multiplying by ``hours``,
    which gives 63.456 kWh for 32 cores and 256 GiB.
    ``ram_over_hours=True`` gives the dimensionally consistent variant.
    """
    if not 0.0 <= utilization <= 1.0:
        raise ValueError("utilization must be in [0, 1]")
    ram_w = ram_gib / 8.0 * ram_w_per_8gib
    wh = tdp_w * utilization * hours * cores + (ram_w * hours if ram_over_hours else ram_w)
    return wh / 1000.0


def functional_units_per_day(mean_response_ms: float) -> int:
    if not mean_response_ms > 0:
        raise ValueError("mean response time must be > 0")
    return int(MS_PER_DAY // mean_response_ms)


@dataclass(frozen=True)
class AccountingConfig:
    tdp_w: float = 165.0
    utilization: float = 0.5
    hours: float = 24.0
    ram_w_per_8gib: float = 3.0
    ram_over_hours: bool = False
    embodied_g: float = 0.0
    weighting: str = "launched"
    vcpus_per_core: float = 2.0

    @classmethod
    def from_dict(cls, d: Mapping) -> "AccountingConfig":
        return cls(**(d or {}))


def _stats(xs: Sequence[float]) -> Optional[dict]:
    if len(xs) == 0:
        return None
    a = np.asarray(xs, dtype=float)
    return {"mean": float(a.mean()), "median": float(np.median(a)),
            "min": float(a.min()), "max": float(a.max()), "p95": float(np.percentile(a, 95)),
            "count": int(a.size)}


@dataclass
class RunSummary:
    strategy: str
    seed: int
    weighting: str
    total_requests: int
    completed_requests: int
    response_time: Optional[dict]
    scheduling_latency: Optional[dict]
    binding_latency: Optional[dict]
    region_tallies: Dict[str, float]
    region_moer: Dict[str, float]
    weighted_moer: Optional[float]
    energy_kwh: float
    functional_units: Optional[int]
    sci_g: Optional[float]
    sci_per_invocation_ug: Optional[float]
    per_function: Dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunSummary":
        return cls(**d)


def fleet_energy(topology, cfg: AccountingConfig) -> float:
    vcpus = sum(n.cpu_capacity for n in topology.nodes) / 1000.0
    ram_gib = sum(n.memory_capacity for n in topology.nodes) / 1024.0
    return energy_estimate(vcpus / cfg.vcpus_per_core, cfg.tdp_w, cfg.utilization, cfg.hours, ram_gib,
                           cfg.ram_w_per_8gib, cfg.ram_over_hours)


def region_tallies(instances, weighting: str, end_ms: float, function: str = None) -> Dict[str, float]:
    if weighting not in WEIGHTING_MODES:
        raise ValueError(f"unknown weighting mode {weighting!r}")
    out: Dict[str, float] = {}
    for inst in instances:
        if inst.region_id is None or (function is not None and inst.function != function):
            continue
        if weighting == "launched":
            w = 1.0
        else:
            start = inst.phase_timestamps[Phase.SCHEDULED]
            w = (inst.phase_timestamps.get(Phase.TERMINATED, end_ms) - start) / 1000.0
        out[inst.region_id] = out.get(inst.region_id, 0.0) + w
    return out


def _emissions(tallies, region_moer, energy, mean_rt, embodied):
    counts = [RegionInstanceCount(r, w, region_moer[r]) for r, w in sorted(tallies.items())]
    if not counts or sum(c.instance_count for c in counts) <= 0 or mean_rt is None or mean_rt <= 0:
        return None, None, None
    I = weighted_moer(counts)
    R = functional_units_per_day(mean_rt)
    if R <= 0:
        return I, None, None
    g = sci(EmissionInputs(energy, I, R, embodied))
    return I, R, g


def summarize_run(result, cfg: AccountingConfig, region_moer: Mapping[str, float]) -> RunSummary:
    """Reduce a finished engine run to a :class:`RunSummary`.

    ``region_moer`` is each provider region's time-averaged g/kWh over the
    run window.
    """
    recs = result.records
    rts = [r.response_time for r in recs]
    sched = [d.decision_latency for d in result.decisions if d.chosen_node is not None]
    binding = [i.phase_timestamps[Phase.RUNNING] - i.phase_timestamps[Phase.SCHEDULED]
               for i in result.instances if Phase.RUNNING in i.phase_timestamps]
    energy = fleet_energy(result.topology, cfg)
    tallies = region_tallies(result.instances, cfg.weighting, result.end_ms)
    rt_stats = _stats(rts)
    I, R, g = _emissions(tallies, region_moer, energy, rt_stats and rt_stats["mean"], cfg.embodied_g)

    per_function = {}
    for fn in sorted({r.function for r in recs}):
        f_rts = [r.response_time for r in recs if r.function == fn]
        f_tallies = region_tallies(result.instances, cfg.weighting, result.end_ms, fn)
        fI, fR, fg = _emissions(f_tallies, region_moer, energy, float(np.mean(f_rts)), cfg.embodied_g)
        per_function[fn] = {"requests": len(f_rts), "mean_response_ms": float(np.mean(f_rts)),
                            "weighted_moer": fI, "sci_per_invocation_ug": None if fg is None else fg * 1e6,
                            "region_tallies": f_tallies}

    return RunSummary(
        strategy=result.strategy, seed=result.seed, weighting=cfg.weighting,
        total_requests=result.total_arrivals, completed_requests=len(recs),
        response_time=rt_stats, scheduling_latency=_stats(sched), binding_latency=_stats(binding),
        region_tallies=tallies, region_moer=dict(region_moer), weighted_moer=I,
        energy_kwh=energy, functional_units=R, sci_g=g,
        sci_per_invocation_ug=None if g is None else g * 1e6, per_function=per_function,
    )
