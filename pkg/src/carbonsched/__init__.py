"""Carbon-aware scheduling of serverless functions across geo-distributed clusters.

A deterministic discrete-event simulator with a filter/score scheduler,
MOER providers, a carbon metrics REST service and SCI accounting.
"""
from .accounting import (
    EmissionInputs,
    RegionInstanceCount,
    RunSummary,
    energy_estimate,
    functional_units_per_day,
    sci,
    summarize_run,
    weighted_moer,
)
from .carbon import (
    CachedCarbonSource,
    MOERSample,
    ScoreTable,
    convert_to_g_per_kwh,
    normalize_scores,
)
from .engine import AutoscalerConfig, LatencyModel, RunResult, Simulation
from .model import ClusterTopology, Dist, FunctionSpec, NodeSpec, Region, reference_topology, validate_topology
from .scheduler import PodRequest, ScheduleDecision, Scheduler

__version__ = "0.1.0"
