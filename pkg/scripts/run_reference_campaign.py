"""Run the bundled 3-strategy x 5-repeat campaign and print the comparison report.

    python3 scripts/run_reference_campaign.py [--out campaigns/reference] [--jobs 4]
"""
import argparse
import os
import sys

from carbonsched.cli import main as cli_main

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "fixtures", "configs", "reference_campaign.yaml")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=CONFIG)
    ap.add_argument("--out", default=os.path.join("campaigns", "reference"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    rc = cli_main(["run", "--config", args.config, "--out", args.out, "--jobs", str(args.jobs)])
    if rc:
        return rc
    return cli_main(["compare", args.out])


if __name__ == "__main__":
    sys.exit(main())
