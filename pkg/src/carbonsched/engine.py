"""Deterministic discrete-event simulation of a multi-cluster FaaS platform.

Requests enter at the management cluster, are routed uniformly over free
running instances of their function, or queue FIFO while the autoscaler
spawns pods. Each pod passes one serialized scheduling decision and a
binding stage before it can serve.
"""
from __future__ import annotations

import heapq
import io
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Mapping, Optional, Sequence, Tuple

from .carbon import CachedCarbonSource, ScoreTableError, build_score_table
from .model import ClusterTopology, Dist, FunctionSpec, InstanceState, Phase
from .rng import Streams
from .scheduler import (
    DEFAULT_SCHEDULING_LATENCY,
    PodRequest,
    ScheduleDecision,
    Scheduler,
    SchedulingContext,
    Usage,
)

# Same-time events: free slots first, then readiness, decisions, arrivals, housekeeping.
KIND_RANK = {
    "RequestComplete": 0,
    "BindingComplete": 1,
    "DecisionDue": 2,
    "RequestArrival": 3,
    "IdleCheck": 4,
    "ScaleEvaluate": 5,
}


class CapacityViolation(AssertionError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    scheduling: Mapping[str, Dist] = field(default_factory=lambda: dict(DEFAULT_SCHEDULING_LATENCY))
    binding_remote: Dist = Dist.constant(8280.0)
    binding_local: Dist = Dist.constant(4530.0)


@dataclass(frozen=True)
class AutoscalerConfig:
    target_concurrency: Mapping[str, int] = field(default_factory=dict)
    scale_to_zero_idle_ms: float = 60_000.0
    evaluate_period_ms: float = 2_000.0
    stable_window_ms: float = 60_000.0
    max_instances: Optional[int] = None

    def target(self, fn: FunctionSpec) -> int:
        return int(self.target_concurrency.get(fn.name, fn.container_concurrency))


def desired_instances(demand: float, target: int, max_instances: int) -> int:
    return min(max(0, math.ceil(demand / target)), max_instances)


@dataclass
class RequestRecord:
    request_id: str
    function: str
    arrival_time: float
    start_service: float
    completion: float
    served_by: str
    node_id: str
    region_id: str
    response_time: float


@dataclass
class _Pending:
    request_id: str
    function: str
    arrival_time: float


@dataclass
class _FnState:
    spec: FunctionSpec
    target: int
    max_instances: int
    instances: List[InstanceState] = field(default_factory=list)
    queue: Deque[_Pending] = field(default_factory=deque)
    demand_history: Deque[Tuple[float, int]] = field(default_factory=deque)
    counter: int = 0

    def live(self):
        return [i for i in self.instances if i.phase != Phase.TERMINATED]

    def in_flight(self):
        return sum(i.in_flight for i in self.instances)


@dataclass
class RunResult:
    strategy: str
    seed: int
    topology: ClusterTopology
    duration_ms: float
    end_ms: float
    total_arrivals: int
    records: List[RequestRecord]
    instances: List[InstanceState]
    decisions: List[ScheduleDecision]
    event_log: List[Tuple[float, str, str, str]]
    unserved: int = 0

    def event_log_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time_ms,kind,entity_id,detail\n")
        for t, kind, ent, detail in self.event_log:
            buf.write(f"{t:.3f},{kind},{ent},{detail}\n")
        return buf.getvalue()

    def records_csv(self) -> str:
        buf = io.StringIO()
        buf.write("request_id,function,arrival_time_ms,start_service_ms,completion_ms,"
                  "served_by,node_id,region_id,response_time_ms\n")
        for r in self.records:
            buf.write(f"{r.request_id},{r.function},{r.arrival_time:.3f},{r.start_service:.3f},"
                      f"{r.completion:.3f},{r.served_by},{r.node_id},{r.region_id},{r.response_time:.3f}\n")
        return buf.getvalue()

    def instances_csv(self) -> str:
        buf = io.StringIO()
        phases = list(Phase)
        buf.write("instance_id,function,node_id,region_id," + ",".join(p.name.lower() + "_ms" for p in phases) + "\n")
        for i in self.instances:
            ts = [i.phase_timestamps.get(p) for p in phases]
            cells = ["" if t is None else f"{t:.3f}" for t in ts]
            buf.write(f"{i.instance_id},{i.function},{i.node_id or ''},{i.region_id or ''}," + ",".join(cells) + "\n")
        return buf.getvalue()


def capacity_bound(fn: FunctionSpec, topology: ClusterTopology) -> int:
    return sum(min(n.cpu_capacity // fn.cpu_request, n.memory_capacity // fn.memory_request)
               for n in topology.nodes)


class Simulation:
    def __init__(self, topology: ClusterTopology, functions: Sequence[FunctionSpec],
                 arrivals: Sequence[Tuple[float, str]], seed: int, *,
                 carbon: CachedCarbonSource = None, strategy: Optional[str] = None,
                 latency: LatencyModel = None, autoscaler: AutoscalerConfig = None,
                 duration_ms: float = 600_000.0, start_epoch_s: float = 0.0,
                 drain_limit_ms: float = 3_600_000.0, check_capacity: bool = True):
        self.topology = topology
        self.functions = {f.name: f for f in functions}
        self.arrivals = list(arrivals)
        self.seed = int(seed)
        self.carbon = carbon
        self.strategy = strategy
        self.latency = latency or LatencyModel()
        self.autoscaler = autoscaler or AutoscalerConfig()
        self.duration_ms = float(duration_ms)
        self.start_epoch_s = float(start_epoch_s)
        self.drain_limit_ms = float(drain_limit_ms)
        self.check_capacity = check_capacity

        unknown = {fn for _, fn in self.arrivals} - set(self.functions)
        if unknown:
            raise ValueError(f"arrivals reference unknown functions: {sorted(unknown)}")

        streams = Streams(self.seed)
        self._routing = streams.get("routing")
        self._binding_rng = streams.get("latency", "binding")
        self._service_rng = {f: streams.get("service", f) for f in self.functions}
        self.scheduler = Scheduler(self.latency.scheduling, streams.get("latency", "scheduling"))
        self.usage = Usage(topology.nodes)

        self._fns: Dict[str, _FnState] = {}
        for f in functions:
            cap = capacity_bound(f, topology)
            mx = cap if self.autoscaler.max_instances is None else min(cap, self.autoscaler.max_instances)
            self._fns[f.name] = _FnState(f, self.autoscaler.target(f), mx)
        self._inst: Dict[str, InstanceState] = {}
        self._creation_order: Dict[str, int] = {}
        self._heap: list = []
        self._seq = 0
        self._sched_queue: Deque[str] = deque()
        self._sched_busy: Optional[Tuple[str, ScheduleDecision]] = None
        self._log: List[Tuple[float, str, str, str]] = []
        self._records: List[RequestRecord] = []
        self._decisions: List[ScheduleDecision] = []
        self._live_requests = 0  # queued + in service

    # ------------------------------------------------------------------ plumbing

    def _push(self, t: float, kind: str, payload: tuple) -> None:
        heapq.heappush(self._heap, (t, KIND_RANK[kind], self._seq, kind, payload))
        self._seq += 1

    def _emit(self, t, kind, entity, detail=""):
        self._log.append((t, kind, entity, detail))

    def epoch(self, t_ms: float) -> float:
        return self.start_epoch_s + t_ms / 1000.0

    def strategy_for(self, fn: FunctionSpec) -> str:
        return self.strategy or fn.scheduler_name

    # ------------------------------------------------------------------ main loop

    def run(self) -> RunResult:
        n_arrivals = 0
        for i, (t, fn) in enumerate(self.arrivals):
            if 0 <= t < self.duration_ms:
                self._push(float(t), "RequestArrival", (fn, f"r{i}"))
                n_arrivals += 1
        if n_arrivals:
            for fn in sorted(self._fns):
                self._push(0.0, "ScaleEvaluate", (fn,))

        now = 0.0
        handlers = {
            "RequestArrival": self._on_arrival,
            "RequestComplete": self._on_complete,
            "DecisionDue": self._on_decision_due,
            "BindingComplete": self._on_binding_complete,
            "IdleCheck": self._on_idle_check,
            "ScaleEvaluate": self._on_scale_evaluate,
        }
        while self._heap:
            t = self._heap[0][0]
            if t >= self.duration_ms and self._live_requests == 0:
                break
            if t > self.duration_ms + self.drain_limit_ms:
                break
            t, _, _, kind, payload = heapq.heappop(self._heap)
            now = t
            handlers[kind](t, *payload)

        end = max(self.duration_ms, now)
        return RunResult(
            strategy=self.strategy or "per_function", seed=self.seed, topology=self.topology,
            duration_ms=self.duration_ms, end_ms=end, total_arrivals=n_arrivals,
            records=self._records, instances=sorted(self._inst.values(), key=lambda i: self._creation_order[i.instance_id]),
            decisions=self._decisions, event_log=self._log, unserved=self._live_requests,
        )

    # ------------------------------------------------------------------ requests

    def _free_instances(self, st: _FnState) -> List[InstanceState]:
        cc = st.spec.container_concurrency
        return [i for i in st.instances if i.phase == Phase.RUNNING and i.in_flight < cc]

    def route_request(self, st: _FnState) -> Optional[InstanceState]:
        free = self._free_instances(st)
        if not free:
            return None
        return free[int(self._routing.integers(len(free)))]

    def _dispatch(self, t: float, req: _Pending, inst: InstanceState) -> None:
        inst.in_flight += 1
        inst.idle_since = None
        st = self._fns[req.function]
        service = max(0.0, st.spec.service_time.sample(self._service_rng[req.function]))
        rtt = self.topology.rtt_to(inst.region_id)
        start = t + rtt / 2.0
        done = t + rtt + service
        self._emit(t, "Dispatch", req.request_id, f"instance={inst.instance_id}")
        self._push(done, "RequestComplete", (req.request_id, req.function, req.arrival_time, start, inst.instance_id))

    def _on_arrival(self, t, fn, request_id):
        self._emit(t, "RequestArrival", request_id, f"function={fn}")
        self._live_requests += 1
        st = self._fns[fn]
        req = _Pending(request_id, fn, t)
        inst = self.route_request(st)
        if inst is not None:
            self._dispatch(t, req, inst)
            return
        st.queue.append(req)
        self._emit(t, "Enqueue", request_id, f"queued={len(st.queue)}")
        self.autoscale_evaluate(fn, t)

    def _on_complete(self, t, request_id, fn, arrival, start, inst_id):
        inst = self._inst[inst_id]
        inst.in_flight -= 1
        self._live_requests -= 1
        self._records.append(RequestRecord(request_id, fn, arrival, start, t, inst_id, inst.node_id,
                                           inst.region_id, t - arrival))
        self._emit(t, "RequestComplete", request_id, f"instance={inst_id};response_ms={t - arrival:.3f}")
        st = self._fns[fn]
        if st.queue:
            self._dispatch(t, st.queue.popleft(), inst)
        elif inst.in_flight == 0:
            self._mark_idle(t, inst)

    def _mark_idle(self, t, inst):
        inst.idle_since = t
        self._push(t + self.autoscaler.scale_to_zero_idle_ms, "IdleCheck", (inst.function, inst.instance_id, t))

    # ------------------------------------------------------------------ autoscaling

    def _on_scale_evaluate(self, t, fn):
        self.autoscale_evaluate(fn, t, periodic=True)
        nxt = t + self.autoscaler.evaluate_period_ms
        if nxt < self.duration_ms or self._live_requests > 0:
            self._push(nxt, "ScaleEvaluate", (fn,))

    def autoscale_evaluate(self, fn: str, t: float, periodic: bool = False) -> int:
        st = self._fns[fn]
        demand = st.in_flight() + len(st.queue)
        st.demand_history.append((t, demand))
        while st.demand_history and st.demand_history[0][0] < t - self.autoscaler.stable_window_ms:
            st.demand_history.popleft()
        desired = desired_instances(demand, st.target, st.max_instances)
        live = st.live()
        if desired > len(live):
            for _ in range(desired - len(live)):
                self._spawn(t, st)
        elif periodic:
            # Scale down against the stable-window peak, idle instances only.
            keep = desired_instances(max(d for _, d in st.demand_history), st.target, st.max_instances)
            excess = len(live) - keep
            if excess > 0:
                idle = [i for i in live if i.phase == Phase.RUNNING and i.in_flight == 0]
                idle.sort(key=lambda i: self._creation_order[i.instance_id], reverse=True)
                for inst in idle[:excess]:
                    self._terminate(t, inst, "scale_down")
        if periodic:
            self._emit(t, "ScaleEvaluate", fn, f"demand={demand};desired={desired};live={len(st.live())}")
        return desired

    def _spawn(self, t, st: _FnState):
        iid = f"{st.spec.name}-{st.counter}"
        st.counter += 1
        inst = InstanceState(iid, st.spec.name)
        inst.advance(Phase.PENDING, t)
        st.instances.append(inst)
        self._inst[iid] = inst
        self._creation_order[iid] = len(self._creation_order)
        self._emit(t, "PodCreated", iid, f"function={st.spec.name}")
        self._sched_queue.append(iid)
        self._start_decision(t)

    def _on_idle_check(self, t, fn, inst_id, idle_token):
        inst = self._inst[inst_id]
        if inst.phase == Phase.RUNNING and inst.in_flight == 0 and inst.idle_since == idle_token:
            self._terminate(t, inst, "idle")

    def _terminate(self, t, inst: InstanceState, reason: str):
        if inst.holds_resources:
            fn = self.functions[inst.function]
            self.usage.release(inst.node_id, fn.cpu_request, fn.memory_request)
        inst.advance(Phase.TERMINATED, t)
        inst.idle_since = None
        self._emit(t, "Terminated", inst.instance_id, f"reason={reason}")

    # ------------------------------------------------------------------ scheduling

    def _region_counts(self, fn: str) -> Dict[str, int]:
        counts: Dict[str, int] = defaultdict(int)
        for i in self._fns[fn].instances:
            if i.holds_resources:
                counts[i.region_id] += 1
        return counts

    def _start_decision(self, t):
        if self._sched_busy is not None or not self._sched_queue:
            return
        iid = self._sched_queue.popleft()
        inst = self._inst[iid]
        fn = self.functions[inst.function]
        strategy = self.strategy_for(fn)
        scores = None
        if strategy == "carbon_aware" and self.carbon is not None:
            try:
                scores = build_score_table(self.carbon, self.topology.region_ids, self.epoch(t))
            except ScoreTableError as e:
                self._emit(t, "ScoreFetchFailed", iid, "regions=" + "|".join(e.failed_regions))
        pod = PodRequest(iid, fn.name, fn.cpu_request, fn.memory_request, fn.tolerations, strategy)
        ctx = SchedulingContext(self.topology, self.usage, scores, self._region_counts(fn.name))
        decision = self.scheduler.schedule(pod, strategy, ctx)
        if self.check_capacity and decision.chosen_node is not None:
            node = self.topology.node(decision.chosen_node)
            if (self.usage.cpu[node.id] > node.cpu_capacity
                    or self.usage.memory[node.id] > node.memory_capacity):
                raise CapacityViolation(f"{node.id} over capacity after placing {iid}")
        self._sched_busy = (iid, decision)
        self._emit(t, "DecisionStart", iid, f"strategy={strategy};feasible={len(decision.feasible_nodes)}")
        self._push(t + decision.decision_latency, "DecisionDue", (iid,))

    def _on_decision_due(self, t, iid):
        _, decision = self._sched_busy
        self._sched_busy = None
        self._decisions.append(decision)
        inst = self._inst[iid]
        if decision.chosen_node is not None:
            node = self.topology.node(decision.chosen_node)
            inst.node_id, inst.region_id = node.id, node.region_id
            inst.advance(Phase.SCHEDULED, t)
            inst.advance(Phase.BINDING, t)
            local = node.annotations.get("binding") == "local"
            dist = self.latency.binding_local if local else self.latency.binding_remote
            b = max(0.0, dist.sample(self._binding_rng))
            self._emit(t, "DecisionDue", iid, f"node={node.id};tie_break={int(decision.tie_break_applied)}")
            self._push(t + b, "BindingComplete", (iid,))
        elif decision.error and decision.error.startswith("missing_region_score"):
            self._emit(t, "DecisionDue", iid, f"retry={decision.error}")
            self._sched_queue.append(iid)
        else:
            self._emit(t, "DecisionDue", iid, f"failed={decision.error}")
            inst.advance(Phase.TERMINATED, t)
        self._start_decision(t)

    def _on_binding_complete(self, t, iid):
        inst = self._inst[iid]
        inst.advance(Phase.RUNNING, t)
        self._emit(t, "BindingComplete", iid, f"node={inst.node_id}")
        st = self._fns[inst.function]
        while st.queue and inst.in_flight < st.spec.container_concurrency:
            self._dispatch(t, st.queue.popleft(), inst)
        if inst.in_flight == 0:
            self._mark_idle(t, inst)
