"""Sweep the gap between the cleanest and dirtiest region and report W.A. MOER per strategy.

Regions keep their ordering; intensities are ``mid + k * spread`` for
k = -1.5, -0.5, 0.5, 1.5 in the four-region synthetic config.
"""
import argparse
import os
from dataclasses import replace

from carbonsched import campaign
from carbonsched.config import load_config

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "fixtures", "configs", "four_region_synthetic.yaml")
ORDER = ("spain", "france", "belgium", "netherlands")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mid", type=float, default=225.0)
    ap.add_argument("--spreads", default="0,10,25,50,100")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    base = load_config(CONFIG)
    print(f"{'spread':>7} " + " ".join(f"{s:>15}" for s in base.strategies) + "  reduction_vs_default%")
    for spread in (float(x) for x in args.spreads.split(",")):
        signals = {r: args.mid + (k - 1.5) * spread for k, r in enumerate(ORDER)}
        cfg = replace(base, carbon={**base.carbon, "signals": signals})
        moer = {s: campaign.run_single(cfg, s, args.seed)[1].weighted_moer for s in cfg.strategies}
        red = 100.0 * (moer["default_spread"] - moer["carbon_aware"]) / moer["default_spread"]
        print(f"{spread:7.1f} " + " ".join(f"{moer[s]:15.2f}" for s in cfg.strategies) + f"  {red:8.2f}")


if __name__ == "__main__":
    main()
