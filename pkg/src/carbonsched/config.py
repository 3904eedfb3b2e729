"""Experiment configuration: one YAML (or JSON) file describing a campaign."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional

import yaml

from .accounting import WEIGHTING_MODES, AccountingConfig
from .carbon import DEFAULT_TTL_S, CachedCarbonSource, CarbonProvider, provider_from_config
from .engine import AutoscalerConfig, LatencyModel
from .model import (
    STRATEGIES,
    ClusterTopology,
    Dist,
    FunctionSpec,
    NodeSpec,
    Region,
    build_nodes,
    validate_function,
    validate_topology,
)
from .scheduler import DEFAULT_SCHEDULING_LATENCY
from .workload import ArrivalStream, constant_row, load_trace, synthesize


class ConfigError(ValueError):
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class WorkloadConfig:
    kind: str = "constant"  # constant | trace
    path: Optional[str] = None
    rate_per_min: int = 60
    function: Optional[str] = None
    window_start_minute: int = 0
    window_minutes: int = 10
    function_map: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    topology: ClusterTopology
    functions: List[FunctionSpec]
    workload: WorkloadConfig
    carbon: Mapping[str, Any]
    strategies: List[str] = field(default_factory=lambda: list(STRATEGIES))
    latency: LatencyModel = field(default_factory=LatencyModel)
    autoscaler: AutoscalerConfig = field(default_factory=AutoscalerConfig)
    accounting: AccountingConfig = field(default_factory=AccountingConfig)
    duration_ms: float = 600_000.0
    repeats: int = 5
    base_seed: int = 0
    start_epoch_s: float = 1_700_000_000.0
    carbon_ttl_s: float = DEFAULT_TTL_S
    service: Mapping[str, Any] = field(default_factory=dict)
    base_dir: str = "."
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def make_provider(self) -> CarbonProvider:
        return provider_from_config(self.carbon, self.base_dir)

    def make_carbon_source(self) -> CachedCarbonSource:
        return CachedCarbonSource(self.make_provider(), self.carbon_ttl_s)

    def arrivals(self, seed: int) -> ArrivalStream:
        w = self.workload
        if w.kind == "constant":
            fn = w.function or self.functions[0].name
            rows = [constant_row(fn, w.rate_per_min, w.window_minutes, w.window_start_minute)]
        else:
            rows = load_trace(self.resolve(w.path))
            if w.function_map:
                rows = [replace(r, function_id=w.function_map.get(r.function_id, r.function_id)) for r in rows]
        return synthesize(rows, w.window_start_minute, w.window_minutes, seed)

    @property
    def window_epoch(self):
        return self.start_epoch_s, self.start_epoch_s + self.duration_ms / 1000.0


def _region(d) -> Region:
    return Region(str(d["id"]), str(d.get("display_name", d["id"])),
                  float(d["latitude"]), float(d["longitude"]))


def _topology(d) -> ClusterTopology:
    mgmt = _region(d["management"])
    providers, nodes, rtt = [], [], {}
    for rd in d["regions"]:
        r = _region(rd)
        providers.append(r)
        if "rtt_ms" in rd:
            rtt[(mgmt.id, r.id)] = float(rd["rtt_ms"])
        group = rd.get("nodes", {})
        extra = {"binding": "local"} if rd.get("local_binding") else None
        if isinstance(group, list):
            for nd in group:
                ann = dict(nd.get("annotations", {"region": r.id}))
                nodes.append(NodeSpec(str(nd["id"]), r.id, int(nd["cpu_millicores"]),
                                      int(nd["memory_mib"]), ann, tuple(nd.get("taints", ()))))
        else:
            nodes += build_nodes(r, int(group.get("count", 4)), int(group.get("cpu_millicores", 4000)),
                                 int(group.get("memory_mib", 16384)), group.get("taints", ()), extra)
    for pair in d.get("rtt_matrix", []) or []:
        rtt[(pair["a"], pair["b"])] = float(pair["rtt_ms"])
    return ClusterTopology(mgmt, tuple(providers), tuple(nodes), rtt)


def _function(d, default_strategy) -> FunctionSpec:
    return FunctionSpec(
        name=str(d["name"]),
        cpu_request=int(d.get("cpu_millicores", 500)),
        memory_request=int(d.get("memory_mib", 512)),
        service_time=Dist.from_dict(d.get("service_time", {"kind": "constant", "value": 100})),
        container_concurrency=int(d.get("container_concurrency", 1)),
        scheduler_name=str(d.get("scheduler_name", default_strategy)),
        tolerations=tuple(d.get("tolerations", ())),
    )


def parse_config(raw: Mapping, base_dir: str = ".") -> ExperimentConfig:
    try:
        strategies = list(raw.get("strategies", STRATEGIES))
        default_strategy = strategies[0] if strategies else "carbon_aware"
        topology = _topology(raw["topology"])
        functions = [_function(f, default_strategy) for f in raw["functions"]]
        wl = dict(raw.get("workload", {}))
        workload = WorkloadConfig(
            kind=wl.get("kind", "constant"), path=wl.get("path"),
            rate_per_min=int(wl.get("rate_per_min", 60)), function=wl.get("function"),
            window_start_minute=int(wl.get("window_start_minute", 0)),
            window_minutes=int(wl.get("window_minutes", 10)),
            function_map=dict(wl.get("function_map", {})),
        )
        lat = dict(raw.get("latency", {}))
        sched = dict(DEFAULT_SCHEDULING_LATENCY)
        sched.update({k: Dist.from_dict(v) for k, v in lat.get("scheduling", {}).items()})
        latency = LatencyModel(
            scheduling=sched,
            binding_remote=Dist.from_dict(lat.get("binding_remote", 8280.0)),
            binding_local=Dist.from_dict(lat.get("binding_local", 4530.0)),
        )
        a = dict(raw.get("autoscaler", {}))
        tc = a.get("target_concurrency", {})
        autoscaler = AutoscalerConfig(
            target_concurrency=dict(tc) if isinstance(tc, Mapping) else {f.name: int(tc) for f in functions},
            scale_to_zero_idle_ms=float(a.get("scale_to_zero_idle_ms", 60_000)),
            evaluate_period_ms=float(a.get("evaluate_period_ms", 2_000)),
            stable_window_ms=float(a.get("stable_window_ms", 60_000)),
            max_instances=a.get("max_instances"),
        )
        accounting = AccountingConfig.from_dict(raw.get("accounting", {}))
        carbon = dict(raw.get("carbon", {"kind": "synthetic"}))
        duration = float(raw.get("duration_ms", workload.window_minutes * 60_000))
        return ExperimentConfig(
            name=str(raw.get("name", "experiment")), topology=topology, functions=functions,
            workload=workload, carbon=carbon, strategies=strategies, latency=latency,
            autoscaler=autoscaler, accounting=accounting, duration_ms=duration,
            repeats=int(raw.get("repeats", 5)), base_seed=int(raw.get("base_seed", 0)),
            start_epoch_s=float(raw.get("start_epoch_s", 1_700_000_000)),
            carbon_ttl_s=float(carbon.get("ttl_s", DEFAULT_TTL_S)),
            service=dict(raw.get("service", {})), base_dir=base_dir, raw=dict(raw),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError([f"malformed config: {type(e).__name__}: {e}"]) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, Mapping):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))


def validate_config(cfg: ExperimentConfig) -> List[str]:
    out = list(validate_topology(cfg.topology))
    names = [f.name for f in cfg.functions]
    if len(set(names)) != len(names):
        out.append("functions: duplicate names")
    for f in cfg.functions:
        out += validate_function(f, cfg.topology)
    if not cfg.strategies:
        out.append("strategies: must be non-empty")
    out += [f"strategies: unknown strategy {s!r}" for s in cfg.strategies if s not in STRATEGIES]
    if cfg.repeats < 1:
        out.append("repeats: must be >= 1")
    if cfg.duration_ms <= 0:
        out.append("duration_ms: must be > 0")
    if cfg.accounting.weighting not in WEIGHTING_MODES:
        out.append(f"accounting.weighting: unknown mode {cfg.accounting.weighting!r}")
    for k, d in cfg.latency.scheduling.items():
        out += [f"latency.scheduling.{k}: {e}" for e in d.validate()]
    out += [f"latency.binding_remote: {e}" for e in cfg.latency.binding_remote.validate()]
    out += [f"latency.binding_local: {e}" for e in cfg.latency.binding_local.validate()]
    a = cfg.autoscaler
    if min(a.scale_to_zero_idle_ms, a.evaluate_period_ms, a.stable_window_ms) <= 0:
        out.append("autoscaler: periods must be > 0")
    if any(v < 1 for v in a.target_concurrency.values()):
        out.append("autoscaler.target_concurrency: must be >= 1")
    if a.max_instances is not None and a.max_instances < 1:
        out.append("autoscaler.max_instances: must be >= 1")

    w = cfg.workload
    if w.kind not in ("constant", "trace"):
        out.append(f"workload.kind: unknown kind {w.kind!r}")
    if w.window_start_minute < 0 or w.window_start_minute + w.window_minutes > 1440 or w.window_minutes < 1:
        out.append("workload: window must lie within [0, 1440) minutes")
    if w.kind == "constant":
        if w.rate_per_min < 0:
            out.append("workload.rate_per_min: must be >= 0")
        if w.function is not None and w.function not in names:
            out.append(f"workload.function: unknown function {w.function!r}")
    elif w.kind == "trace":
        if not w.path:
            out.append("workload.path: required for trace workloads")
        elif not os.path.exists(cfg.resolve(w.path)):
            out.append(f"workload.path: trace file {cfg.resolve(w.path)} does not exist")
        else:
            try:
                rows = load_trace(cfg.resolve(w.path))
                for r in rows:
                    fid = w.function_map.get(r.function_id, r.function_id)
                    if fid not in names:
                        out.append(f"workload: trace function {fid!r} has no function definition")
            except ValueError as e:
                out.append(f"workload: {e}")

    # Accounting needs MOER for every strategy, so the provider is always checked.
    carbon_ok = True
    if cfg.carbon.get("kind", "synthetic") == "trace":
        p = cfg.carbon.get("path")
        if not p or not os.path.exists(cfg.resolve(p)):
            out.append(f"carbon.path: trace file {p and cfg.resolve(p)} does not exist")
            carbon_ok = False
    if carbon_ok:
        try:
            provider = cfg.make_provider()
            t0, t1 = cfg.window_epoch
            out += provider.validate(cfg.topology.region_ids, t0, t1)
        except (ValueError, KeyError) as e:
            out.append(f"carbon: {e}")
    if cfg.carbon_ttl_s <= 0:
        out.append("carbon.ttl_s: must be > 0")
    return out
