"""Strategy-comparison campaigns: N repeats x strategies, artifacts on disk, reports.

Layout of one campaign directory::

    <out>/campaign.json                  seed schedule and run index
    <out>/<strategy>/rep<k>/events.csv   engine event log
    <out>/<strategy>/rep<k>/requests.csv request records
    <out>/<strategy>/rep<k>/instances.csv
    <out>/<strategy>/rep<k>/summary.json RunSummary
    <out>/runs.csv                       comparison table keyed by (strategy, seed)
    <out>/report.json                    written by ``compare``
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .accounting import RunSummary, summarize_run
from .config import ExperimentConfig
from .engine import RunResult, Simulation


class CompareError(ValueError):
    pass


def seed_for(base_seed: int, strategy_index: int, repeat_index: int) -> int:
    """Strategies share the seed of a repeat so they see identical arrival streams."""
    return int(base_seed) + int(repeat_index)


def region_moer(cfg: ExperimentConfig, provider=None) -> Dict[str, float]:
    provider = provider or cfg.make_provider()
    t0, t1 = cfg.window_epoch
    return {r: provider.time_average(r, t0, t1) for r in cfg.topology.region_ids}


def run_single(cfg: ExperimentConfig, strategy: str, seed: int) -> Tuple[RunResult, RunSummary]:
    source = cfg.make_carbon_source()
    sim = Simulation(
        cfg.topology, cfg.functions, cfg.arrivals(seed), seed,
        carbon=source, strategy=strategy, latency=cfg.latency, autoscaler=cfg.autoscaler,
        duration_ms=cfg.duration_ms, start_epoch_s=cfg.start_epoch_s,
    )
    result = sim.run()
    summary = summarize_run(result, cfg.accounting, region_moer(cfg, source.provider))
    return result, summary


def dumps_summary(summary: RunSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"


def _write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _run_job(args):
    cfg, strategy, rep, seed, out_dir = args
    result, summary = run_single(cfg, strategy, seed)
    d = os.path.join(out_dir, strategy, f"rep{rep}")
    _write(os.path.join(d, "events.csv"), result.event_log_csv())
    _write(os.path.join(d, "requests.csv"), result.records_csv())
    _write(os.path.join(d, "instances.csv"), result.instances_csv())
    _write(os.path.join(d, "summary.json"), dumps_summary(summary))
    return strategy, rep, seed, summary


RUNS_COLUMNS = ["strategy", "seed", "repeat", "total_requests", "completed_requests",
                "mean_response_ms", "p95_response_ms", "weighted_moer", "sci_per_invocation_ug",
                "mean_scheduling_ms", "mean_binding_ms"]


def _runs_row(strategy, rep, seed, s: RunSummary):
    def g(d, k):
        return "" if d is None else d[k]
    return [strategy, seed, rep, s.total_requests, s.completed_requests,
            g(s.response_time, "mean"), g(s.response_time, "p95"),
            "" if s.weighted_moer is None else s.weighted_moer,
            "" if s.sci_per_invocation_ug is None else s.sci_per_invocation_ug,
            g(s.scheduling_latency, "mean"), g(s.binding_latency, "mean")]


def run_campaign(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> List[Tuple[str, int, int, RunSummary]]:
    jobs_list = [(cfg, s, rep, seed_for(cfg.base_seed, si, rep), out_dir)
                 for si, s in enumerate(cfg.strategies) for rep in range(cfg.repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_job, jobs_list))
    else:
        results = [_run_job(j) for j in jobs_list]
    results.sort(key=lambda r: (cfg.strategies.index(r[0]), r[1]))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_COLUMNS)
    for strategy, rep, seed, s in results:
        w.writerow(_runs_row(strategy, rep, seed, s))
    _write(os.path.join(out_dir, "runs.csv"), buf.getvalue())
    meta = {"name": cfg.name, "strategies": list(cfg.strategies), "repeats": cfg.repeats,
            "base_seed": cfg.base_seed,
            "runs": [{"strategy": s, "repeat": rep, "seed": seed} for s, rep, seed, _ in results]}
    _write(os.path.join(out_dir, "campaign.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return results


def load_summaries(campaign_dir: str) -> Dict[str, Dict[int, RunSummary]]:
    out: Dict[str, Dict[int, RunSummary]] = {}
    for strategy in sorted(os.listdir(campaign_dir)):
        sdir = os.path.join(campaign_dir, strategy)
        if not os.path.isdir(sdir):
            continue
        for rep_name in sorted(os.listdir(sdir)):
            p = os.path.join(sdir, rep_name, "summary.json")
            if rep_name.startswith("rep") and os.path.exists(p):
                with open(p) as fh:
                    out.setdefault(strategy, {})[int(rep_name[3:])] = RunSummary.from_dict(json.load(fh))
    return out


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def emission_reduction_pct(sci_a: Sequence[float], sci_b: Sequence[float]) -> float:
    """Arithmetic mean over paired runs of (B - A) / B, in percent."""
    return 100.0 * sum((b - a) / b for a, b in zip(sci_a, sci_b)) / len(sci_a)


def gm_slowdown_pct(ratios: Sequence[float]) -> float:
    """Geometric-mean ratio minus one, in percent."""
    return 100.0 * (math.exp(sum(math.log(r) for r in ratios) / len(ratios)) - 1.0)


def compare(campaign_dir: str) -> dict:
    summaries = load_summaries(campaign_dir)
    if len(summaries) < 2:
        raise CompareError(f"{campaign_dir}: need summaries for >= 2 strategies, found {sorted(summaries)}")

    aggregated = {}
    for s, reps in summaries.items():
        rs = [reps[k] for k in sorted(reps)]
        aggregated[s] = {
            "repeats": len(rs),
            "sci_per_invocation_ug": _mean([r.sci_per_invocation_ug for r in rs]),
            "weighted_moer": _mean([r.weighted_moer for r in rs]),
            "mean_response_ms": _mean([r.response_time and r.response_time["mean"] for r in rs]),
            "p95_response_ms": _mean([r.response_time and r.response_time["p95"] for r in rs]),
            "mean_scheduling_ms": _mean([r.scheduling_latency and r.scheduling_latency["mean"] for r in rs]),
            "mean_binding_ms": _mean([r.binding_latency and r.binding_latency["mean"] for r in rs]),
            "completed_requests": _mean([r.completed_requests for r in rs]),
        }

    reductions, slowdowns = {}, {}
    names = sorted(summaries)
    for a in names:
        for b in names:
            if a == b:
                continue
            common = sorted(set(summaries[a]) & set(summaries[b]))
            pairs = [(summaries[a][k], summaries[b][k]) for k in common]
            sci_pairs = [(x.sci_per_invocation_ug, y.sci_per_invocation_ug) for x, y in pairs
                         if x.sci_per_invocation_ug is not None and y.sci_per_invocation_ug]
            if sci_pairs:
                reductions[f"{a}_vs_{b}"] = emission_reduction_pct([p[0] for p in sci_pairs],
                                                                   [p[1] for p in sci_pairs])
            ratios = []
            for x, y in pairs:
                for fn in sorted(set(x.per_function) & set(y.per_function)):
                    ra, rb = x.per_function[fn]["mean_response_ms"], y.per_function[fn]["mean_response_ms"]
                    if ra > 0 and rb > 0:
                        ratios.append(ra / rb)
            if ratios:
                slowdowns[f"{a}_vs_{b}"] = gm_slowdown_pct(ratios)

    report = {"strategies": aggregated, "emission_reduction_pct": reductions,
              "response_slowdown_pct": slowdowns}
    if "carbon_aware" in summaries:
        vs = [v for k, v in reductions.items() if k.startswith("carbon_aware_vs_")]
        if vs:
            report["carbon_aware_mean_reduction_pct"] = sum(vs) / len(vs)
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def format_report(report: dict) -> str:
    lines = ["strategy          sci_ug/inv   W.A.MOER   mean_rt_ms   sched_ms   bind_ms"]
    for s, a in sorted(report["strategies"].items()):
        def f(v, spec):
            return format(v, spec) if v is not None else "-"
        lines.append(f"{s:<16} {f(a['sci_per_invocation_ug'], '11.2f')} {f(a['weighted_moer'], '10.2f')} "
                     f"{f(a['mean_response_ms'], '12.2f')} {f(a['mean_scheduling_ms'], '10.1f')} "
                     f"{f(a['mean_binding_ms'], '9.1f')}")
    lines.append("")
    for k, v in sorted(report["emission_reduction_pct"].items()):
        lines.append(f"carbon reduction {k}: {v:.2f}%")
    for k, v in sorted(report["response_slowdown_pct"].items()):
        lines.append(f"GM response slowdown {k}: {v:.2f}%")
    if "carbon_aware_mean_reduction_pct" in report:
        lines.append(f"carbon_aware mean reduction: {report['carbon_aware_mean_reduction_pct']:.2f}%")
    return "\n".join(lines) + "\n"
