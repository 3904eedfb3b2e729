"""Command line entry point: run, compare, serve, gen-trace, validate.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import time

from . import campaign
from .carbon import (
    G_PER_KWH,
    UNITS,
    CachedCarbonSource,
    Constant,
    MOERSample,
    Sinusoid,
    write_carbon_trace,
)
from .config import ConfigError, load_config, validate_config
from .service import MetricsService, make_server
from .workload import constant_row, write_trace

log = logging.getLogger("carbonsched")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load_valid(path, **overrides):
    try:
        cfg = load_config(path)
    except FileNotFoundError:
        return None, [f"config file {path} does not exist"]
    except ConfigError as e:
        return None, e.violations
    cfg = cfg.with_overrides(**overrides)
    return cfg, validate_config(cfg)


def _report_violations(violations):
    for v in violations:
        print(f"invalid: {v}", file=sys.stderr)


def cmd_validate(args) -> int:
    cfg, violations = _load_valid(args.config)
    if violations:
        _report_violations(violations)
        return EXIT_INVALID
    print(f"{args.config}: ok ({len(cfg.topology.nodes)} nodes, {len(cfg.functions)} functions)")
    return EXIT_OK


def cmd_run(args) -> int:
    strategies = args.strategies.split(",") if args.strategies else None
    cfg, violations = _load_valid(args.config, base_seed=args.seed, repeats=args.repeats,
                                  strategies=strategies)
    if violations:
        _report_violations(violations)
        return EXIT_INVALID
    out = args.out or os.path.join("campaigns", cfg.name)
    t0 = time.perf_counter()
    results = campaign.run_campaign(cfg, out, jobs=args.jobs)
    for strategy, rep, seed, s in results:
        sci = "-" if s.sci_per_invocation_ug is None else f"{s.sci_per_invocation_ug:.2f}"
        print(f"{strategy:<15} rep{rep} seed={seed} requests={s.completed_requests} sci_ug={sci}")
    print(f"wrote {len(results)} runs to {out} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        report = campaign.compare(args.campaign_dir)
    except (campaign.CompareError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    with open(os.path.join(args.campaign_dir, "report.json"), "w") as fh:
        fh.write(campaign.dumps_report(report))
    text = campaign.format_report(report)
    with open(os.path.join(args.campaign_dir, "report.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg, violations = _load_valid(args.config)
    if violations:
        _report_violations(violations)
        return EXIT_INVALID
    svc_cfg = dict(cfg.service)
    host = args.host or svc_cfg.get("host", "127.0.0.1")
    port = args.port if args.port is not None else int(svc_cfg.get("port", 8080))
    ttl = float(svc_cfg.get("ttl_s", cfg.carbon_ttl_s))
    clock = time.time
    if args.at is not None:
        origin, wall0 = float(args.at), time.time()
        clock = lambda: origin + (time.time() - wall0)  # noqa: E731
    service = MetricsService(CachedCarbonSource(cfg.make_provider(), ttl), cfg.topology.region_ids, clock)
    try:
        server = make_server(service, host, port)
    except OSError as e:
        print(f"error: cannot bind {host}:{port}: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    def _stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _stop)
    print(f"serving carbon scores on http://{host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _parse_regions(spec: str):
    out = {}
    for part in spec.split(","):
        name, _, value = part.partition("=")
        if not name or not value:
            raise ValueError(f"expected region=value, got {part!r}")
        out[name.strip()] = float(value)
    return out


def cmd_gen_trace(args) -> int:
    try:
        if args.kind == "workload":
            if args.rate < 0:
                raise ValueError("rate must be >= 0")
            row = constant_row(args.function, int(args.rate), args.minutes, args.start_minute)
            write_trace(args.out, [row])
        else:
            bases = _parse_regions(args.regions)
            if args.step_s <= 0 or args.minutes <= 0:
                raise ValueError("step and minutes must be > 0")
            if any(b < 0 for b in bases.values()):
                raise ValueError("base intensities must be >= 0")
            n = int(args.minutes * 60 // args.step_s) + 1
            samples = []
            for region, base in bases.items():
                sig = Sinusoid(base, args.amplitude, args.period_s) if args.amplitude else Constant(base)
                for k in range(n):
                    t = args.start_epoch + k * args.step_s
                    samples.append(MOERSample(region, t, sig.at(t), args.unit))
            write_carbon_trace(args.out, samples)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carbonsched", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check an experiment config")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run repeats x strategies and write artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int, help="override base_seed")
    r.add_argument("--repeats", type=int)
    r.add_argument("--strategies", help="comma-separated strategy keys")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="aggregate a campaign directory into a report")
    c.add_argument("campaign_dir")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("serve", help="run the carbon metrics REST service")
    s.add_argument("--config", required=True)
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--at", type=float, help="start the service clock at this epoch (s)")
    s.set_defaults(func=cmd_serve)

    g = sub.add_parser("gen-trace", help="write a synthetic workload or carbon trace")
    g.add_argument("kind", choices=["workload", "carbon"])
    g.add_argument("--out", required=True)
    g.add_argument("--function", default="fn")
    g.add_argument("--rate", type=float, default=60, help="invocations per minute")
    g.add_argument("--minutes", type=int, default=10)
    g.add_argument("--start-minute", type=int, default=0)
    g.add_argument("--regions", default="spain=150,france=200,belgium=250,netherlands=300",
                   help="region=base intensity pairs")
    g.add_argument("--amplitude", type=float, default=0.0)
    g.add_argument("--period-s", type=float, default=86_400.0)
    g.add_argument("--start-epoch", type=float, default=1_700_000_000.0)
    g.add_argument("--step-s", type=float, default=300.0)
    g.add_argument("--unit", choices=UNITS, default=G_PER_KWH)
    g.set_defaults(func=cmd_gen_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
