"""Filter/score scheduling pipeline with carbon-aware, geo-aware and spread scoring."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .carbon import ScoreTable
from .model import STRATEGIES, ClusterTopology, Dist, NodeSpec, Region

EARTH_RADIUS_KM = 6371.0088

# Mean decision latencies; geo-aware shares the carbon-aware implementation cost.
DEFAULT_SCHEDULING_LATENCY = {
    "carbon_aware": Dist.constant(539.0),
    "geo_aware": Dist.constant(539.0),
    "default_spread": Dist.constant(515.0),
}


class MissingRegionScore(KeyError):
    pass


@dataclass(frozen=True)
class PodRequest:
    pod_id: str
    function: str
    cpu_request: int
    memory_request: int
    tolerations: Tuple[str, ...] = ()
    scheduler_name: str = "carbon_aware"


@dataclass
class ScheduleDecision:
    pod_id: str
    strategy: str
    chosen_node: Optional[str]
    per_node_scores: Dict[str, float]
    feasible_nodes: List[str]
    tie_break_applied: bool
    decision_latency: float
    error: Optional[str] = None


class Usage:
    """Committed (cpu, memory) per node."""

    def __init__(self, nodes: Sequence[NodeSpec]):
        self.cpu: Dict[str, int] = {n.id: 0 for n in nodes}
        self.memory: Dict[str, int] = {n.id: 0 for n in nodes}

    def commit(self, node_id: str, cpu: int, memory: int) -> None:
        self.cpu[node_id] += cpu
        self.memory[node_id] += memory

    def release(self, node_id: str, cpu: int, memory: int) -> None:
        self.cpu[node_id] -= cpu
        self.memory[node_id] -= memory
        assert self.cpu[node_id] >= 0 and self.memory[node_id] >= 0


def filter_nodes(pod: PodRequest, nodes: Sequence[NodeSpec], usage: Usage) -> List[NodeSpec]:
    """Resources-fit plus taint-toleration."""
    tolerated = set(pod.tolerations)
    out = []
    for n in nodes:
        if n.cpu_capacity - usage.cpu[n.id] < pod.cpu_request:
            continue
        if n.memory_capacity - usage.memory[n.id] < pod.memory_request:
            continue
        if any(t not in tolerated for t in n.taints):
            continue
        out.append(n)
    return out


def score_carbon_aware(pod: PodRequest, feasible: Sequence[NodeSpec], scores: ScoreTable) -> Dict[str, float]:
    # The table is already normalized over the full region set.
    out = {}
    for n in feasible:
        region = n.annotations.get("region")
        if region not in scores.entries:
            raise MissingRegionScore(region)
        out[n.id] = scores.entries[region].score
    return out


def haversine_km(a: Region, b: Region) -> float:
    la1, lo1, la2, lo2 = map(math.radians, (a.latitude, a.longitude, b.latitude, b.longitude))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _inverted_minmax(values: Mapping[str, float]) -> Dict[str, float]:
    if not values:
        return {}
    lo, hi = min(values.values()), max(values.values())
    if hi == lo:
        return {k: 100.0 for k in values}
    return {k: (hi - v) / (hi - lo) * 100.0 for k, v in values.items()}


def score_geo_aware(pod: PodRequest, feasible: Sequence[NodeSpec], topology: ClusterTopology) -> Dict[str, float]:
    mgmt = topology.management_region
    dist = {n.id: haversine_km(mgmt, topology.region(n.region_id)) for n in feasible}
    return _inverted_minmax(dist)


def score_default_spread(pod: PodRequest, feasible: Sequence[NodeSpec],
                         running: Mapping[str, int]) -> Dict[str, float]:
    """Favour regions holding fewer instances of the pod's function."""
    counts = {n.region_id: running.get(n.region_id, 0) for n in feasible}
    c_max = max(counts.values(), default=0)
    if c_max == 0:
        return {n.id: 100.0 for n in feasible}
    return {n.id: 100.0 * (1.0 - counts[n.region_id] / c_max) for n in feasible}


@dataclass
class SchedulingContext:
    topology: ClusterTopology
    usage: Usage
    scores: Optional[ScoreTable] = None
    region_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def nodes(self):
        return self.topology.nodes


class Scheduler:
    """One serialized scheduling loop with a round-robin tie-break cursor."""

    def __init__(self, latency: Mapping[str, Dist] = None, rng: np.random.Generator = None):
        self.latency = dict(DEFAULT_SCHEDULING_LATENCY)
        self.latency.update(latency or {})
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._cursors: Dict[tuple, int] = defaultdict(int)

    def score(self, pod: PodRequest, strategy: str, feasible, ctx: SchedulingContext) -> Dict[str, float]:
        if strategy == "carbon_aware":
            if ctx.scores is None:
                raise MissingRegionScore("no score table")
            return score_carbon_aware(pod, feasible, ctx.scores)
        if strategy == "geo_aware":
            return score_geo_aware(pod, feasible, ctx.topology)
        if strategy == "default_spread":
            return score_default_spread(pod, feasible, ctx.region_counts)
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    def schedule(self, pod: PodRequest, strategy: str, ctx: SchedulingContext) -> ScheduleDecision:
        latency = max(0.0, self.latency[strategy].sample(self.rng))
        feasible = filter_nodes(pod, ctx.nodes, ctx.usage)
        ids = [n.id for n in feasible]
        if not feasible:
            return ScheduleDecision(pod.pod_id, strategy, None, {}, [], False, latency, "no_feasible_node")
        try:
            scores = self.score(pod, strategy, feasible, ctx)
        except MissingRegionScore as e:
            return ScheduleDecision(pod.pod_id, strategy, None, {}, ids, False, latency,
                                    f"missing_region_score:{e.args[0]}")
        best = max(scores.values())
        tied = sorted(nid for nid, s in scores.items() if s == best)
        key = (strategy, pod.function, tuple(tied))
        chosen = tied[self._cursors[key] % len(tied)]
        self._cursors[key] += 1
        node = ctx.topology.node(chosen)
        ctx.usage.commit(node.id, pod.cpu_request, pod.memory_request)
        return ScheduleDecision(pod.pod_id, strategy, chosen, scores, ids, len(tied) > 1, latency)
