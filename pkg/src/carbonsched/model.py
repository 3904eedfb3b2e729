"""Domain types: regions, nodes, topology, functions and the instance lifecycle."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

STRATEGIES = ("carbon_aware", "geo_aware", "default_spread")


@dataclass(frozen=True)
class Dist:
    """Sampling descriptor for a non-negative duration in ms.

    ``constant(value)``, ``exponential(mean)`` or ``lognormal(mu, sigma)``
    where mu/sigma are the parameters of the underlying normal in log-ms.
    """

    kind: str
    value: float = 0.0
    mean: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0

    @classmethod
    def constant(cls, value: float) -> "Dist":
        return cls("constant", value=float(value))

    @classmethod
    def exponential(cls, mean: float) -> "Dist":
        return cls("exponential", mean=float(mean))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "Dist":
        return cls("lognormal", mu=float(mu), sigma=float(sigma))

    @classmethod
    def lognormal_with_mean(cls, mean: float, sigma: float) -> "Dist":
        return cls.lognormal(math.log(mean) - sigma * sigma / 2.0, sigma)

    @classmethod
    def from_dict(cls, d) -> "Dist":
        if isinstance(d, (int, float)):
            return cls.constant(d)
        kind = d.get("kind", "constant")
        if kind == "constant":
            return cls.constant(d["value"])
        if kind == "exponential":
            return cls.exponential(d["mean"])
        if kind == "lognormal":
            if "mean" in d:
                return cls.lognormal_with_mean(d["mean"], d["sigma"])
            return cls.lognormal(d["mu"], d["sigma"])
        raise ValueError(f"unknown distribution kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "exponential":
            return {"kind": "exponential", "mean": self.mean}
        return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma}

    @property
    def expected(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "exponential":
            return self.mean
        return math.exp(self.mu + self.sigma * self.sigma / 2.0)

    def validate(self) -> List[str]:
        if self.kind not in ("constant", "exponential", "lognormal"):
            return [f"unknown distribution kind {self.kind!r}"]
        if self.kind == "constant" and self.value < 0:
            return ["constant distribution must be >= 0"]
        if self.kind == "exponential" and self.mean <= 0:
            return ["exponential mean must be > 0"]
        if self.kind == "lognormal" and self.sigma < 0:
            return ["lognormal sigma must be >= 0"]
        return []

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "exponential":
            return float(rng.exponential(self.mean))
        return float(rng.lognormal(self.mu, self.sigma))


@dataclass(frozen=True)
class Region:
    id: str
    display_name: str
    latitude: float
    longitude: float


@dataclass(frozen=True)
class NodeSpec:
    id: str
    region_id: str
    cpu_capacity: int  # millicores of vCPU
    memory_capacity: int  # MiB
    annotations: Mapping[str, str] = field(default_factory=dict)
    taints: Tuple[str, ...] = ()

    @property
    def region(self) -> Optional[str]:
        return self.annotations.get("region")


@dataclass(frozen=True)
class ClusterTopology:
    management_region: Region
    provider_regions: Tuple[Region, ...]
    nodes: Tuple[NodeSpec, ...]
    rtt_matrix: Mapping[Tuple[str, str], float]

    def region(self, region_id: str) -> Region:
        if region_id == self.management_region.id:
            return self.management_region
        for r in self.provider_regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    @property
    def region_ids(self) -> List[str]:
        return [r.id for r in self.provider_regions]

    def node(self, node_id: str) -> NodeSpec:
        return self._node_index[node_id]

    @property
    def _node_index(self) -> Dict[str, NodeSpec]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {n.id: n for n in self.nodes}
            object.__setattr__(self, "_idx", idx)
        return idx

    def rtt(self, a: str, b: str) -> float:
        if a == b:
            return self.rtt_matrix.get((a, b), 0.0)
        if (a, b) in self.rtt_matrix:
            return self.rtt_matrix[(a, b)]
        return self.rtt_matrix[(b, a)]

    def rtt_to(self, region_id: str) -> float:
        """Round trip between the management cluster and ``region_id``."""
        return self.rtt(self.management_region.id, region_id)


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    cpu_request: int
    memory_request: int
    service_time: Dist
    container_concurrency: int = 1
    scheduler_name: str = "carbon_aware"
    tolerations: Tuple[str, ...] = ()


class Phase(enum.IntEnum):
    PENDING = 0
    SCHEDULED = 1
    BINDING = 2
    RUNNING = 3
    TERMINATED = 4


class PhaseError(RuntimeError):
    pass


@dataclass
class InstanceState:
    instance_id: str
    function: str
    phase: Phase = Phase.PENDING
    node_id: Optional[str] = None
    region_id: Optional[str] = None
    phase_timestamps: Dict[Phase, float] = field(default_factory=dict)
    in_flight: int = 0
    idle_since: Optional[float] = None

    def advance(self, phase: Phase, t: float) -> None:
        cur = self.phase
        if not self.phase_timestamps:
            cur = None
        ok = (
            (cur is None and phase == Phase.PENDING)
            or (cur is not None and phase == cur + 1)
            or (cur == Phase.PENDING and phase == Phase.TERMINATED)
        )
        if not ok:
            raise PhaseError(f"{self.instance_id}: {cur!r} -> {phase!r} is not allowed")
        if self.phase_timestamps and t < max(self.phase_timestamps.values()):
            raise PhaseError(f"{self.instance_id}: timestamp {t} goes backwards")
        self.phase = phase
        self.phase_timestamps[phase] = t

    @property
    def holds_resources(self) -> bool:
        return self.phase in (Phase.SCHEDULED, Phase.BINDING, Phase.RUNNING)


def validate_topology(topology: ClusterTopology) -> List[str]:
    """Return one human-readable line per broken invariant; empty when valid."""
    out: List[str] = []
    regions = [topology.management_region, *topology.provider_regions]
    seen = set()
    for r in regions:
        if r.id in seen:
            out.append(f"region {r.id}: duplicate id")
        seen.add(r.id)
        if not -90.0 <= r.latitude <= 90.0:
            out.append(f"region {r.id}: latitude {r.latitude} outside [-90, 90]")
        if not -180.0 <= r.longitude <= 180.0:
            out.append(f"region {r.id}: longitude {r.longitude} outside [-180, 180]")

    provider_ids = {r.id for r in topology.provider_regions}
    node_ids = set()
    for n in topology.nodes:
        if n.id in node_ids:
            out.append(f"node {n.id}: duplicate id")
        node_ids.add(n.id)
        if n.cpu_capacity <= 0:
            out.append(f"node {n.id}: cpu_capacity must be > 0")
        if n.memory_capacity <= 0:
            out.append(f"node {n.id}: memory_capacity must be > 0")
        if n.region_id not in provider_ids:
            out.append(f"node {n.id}: region {n.region_id!r} is not a provider region")
        if "region" not in n.annotations:
            out.append(f"node {n.id}: annotations lack required key 'region'")
        elif n.annotations["region"] != n.region_id:
            out.append(
                f"node {n.id}: annotation region={n.annotations['region']!r} "
                f"does not match region_id={n.region_id!r}"
            )

    m = topology.management_region.id
    for (a, b), v in topology.rtt_matrix.items():
        if v < 0 or not math.isfinite(v):
            out.append(f"rtt {a}<->{b}: must be finite and >= 0, got {v}")
        if (b, a) in topology.rtt_matrix and topology.rtt_matrix[(b, a)] != v:
            out.append(f"rtt {a}<->{b}: matrix is not symmetric")
    for r in topology.provider_regions:
        if (m, r.id) not in topology.rtt_matrix and (r.id, m) not in topology.rtt_matrix:
            out.append(f"rtt {m}<->{r.id}: missing entry")
    return out


def validate_function(fn: FunctionSpec, topology: ClusterTopology) -> List[str]:
    out = []
    if fn.cpu_request <= 0 or fn.memory_request <= 0:
        out.append(f"function {fn.name}: requests must be > 0")
    if fn.container_concurrency < 1:
        out.append(f"function {fn.name}: container_concurrency must be >= 1")
    if topology.nodes:
        if fn.cpu_request > max(n.cpu_capacity for n in topology.nodes):
            out.append(f"function {fn.name}: cpu_request exceeds every node's capacity")
        if fn.memory_request > max(n.memory_capacity for n in topology.nodes):
            out.append(f"function {fn.name}: memory_request exceeds every node's capacity")
    if fn.scheduler_name not in STRATEGIES:
        out.append(f"function {fn.name}: unknown scheduler_name {fn.scheduler_name!r}")
    out += [f"function {fn.name}: service_time: {e}" for e in fn.service_time.validate()]
    return out


def build_nodes(region: Region, count: int, cpu: int, memory: int,
                taints=(), extra_annotations=None) -> List[NodeSpec]:
    ann = {"region": region.id, **(extra_annotations or {})}
    return [
        NodeSpec(f"{region.id}-n{i}", region.id, cpu, memory, dict(ann), tuple(taints))
        for i in range(count)
    ]


# Reference layout: Frankfurt management cluster, four provider clusters of
# four e2-standard-4 VMs (4 vCPU, 16 GiB) each.
REFERENCE_REGIONS = {
    "frankfurt": Region("frankfurt", "europe-west3-a (Frankfurt)", 50.1109, 8.6821),
    "spain": Region("spain", "europe-southwest1-a (Spain)", 40.4168, -3.7038),
    "france": Region("france", "europe-west9-a (France)", 48.8566, 2.3522),
    "belgium": Region("belgium", "europe-west1-b (Belgium)", 50.4489, 3.8186),
    "netherlands": Region("netherlands", "europe-west4-a (Netherlands)", 53.4386, 6.8336),
}
REFERENCE_RTT_MS = {"spain": 32.0, "france": 14.0, "belgium": 9.0, "netherlands": 10.0}


def reference_topology(rtt_ms: Optional[Mapping[str, float]] = None,
                   nodes_per_region: int = 4) -> ClusterTopology:
    rtt_ms = dict(REFERENCE_RTT_MS if rtt_ms is None else rtt_ms)
    mgmt = REFERENCE_REGIONS["frankfurt"]
    providers = tuple(REFERENCE_REGIONS[k] for k in ("spain", "france", "belgium", "netherlands"))
    nodes = []
    for r in providers:
        nodes += build_nodes(r, nodes_per_region, 4000, 16384)
    rtt = {(mgmt.id, r.id): rtt_ms[r.id] for r in providers}
    return ClusterTopology(mgmt, providers, tuple(nodes), rtt)
