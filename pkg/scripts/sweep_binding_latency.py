"""Show how the remote binding latency drives cold-start response times per strategy."""
import argparse
import os
from dataclasses import replace

from carbonsched import campaign
from carbonsched.config import load_config
from carbonsched.model import Dist

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "fixtures", "configs", "reference_campaign.yaml")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--binding-ms", default="1000,4530,8280,15000")
    ap.add_argument("--seed", type=int, default=100)
    args = ap.parse_args()

    base = load_config(CONFIG)
    print(f"{'binding_ms':>10} {'strategy':<15} {'mean_rt_ms':>11} {'p95_rt_ms':>11} {'sci_ug':>9}")
    for b in (float(x) for x in args.binding_ms.split(",")):
        cfg = replace(base, latency=replace(base.latency, binding_remote=Dist.lognormal_with_mean(b, 0.15)))
        for s in cfg.strategies:
            summary = campaign.run_single(cfg, s, args.seed)[1]
            rt = summary.response_time
            print(f"{b:10.0f} {s:<15} {rt['mean']:11.1f} {rt['p95']:11.1f} {summary.sci_per_invocation_ug:9.2f}")


if __name__ == "__main__":
    main()
