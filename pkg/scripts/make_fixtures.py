"""Regenerate the bundled trace fixtures under fixtures/traces/.

The invocation trace is a small hand-shaped Azure-style day for four
functions; the carbon trace is a 5-minute-step day for the four provider
regions whose orderings never cross.
"""
import math
import os
import sys

from carbonsched.carbon import G_PER_KWH, MOERSample, write_carbon_trace
from carbonsched.workload import MINUTES_PER_DAY, TraceRow, write_trace

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "fixtures", "traces")

START_EPOCH = 1_700_000_000


def diurnal(peak, trough, phase_min=0):
    return [int(round(trough + (peak - trough) * 0.5 * (1 + math.sin(2 * math.pi * (m - phase_min) / MINUTES_PER_DAY))))
            for m in range(MINUTES_PER_DAY)]


def bursty(base, burst, every, width):
    return [burst if (m % every) < width else base for m in range(MINUTES_PER_DAY)]


def main(out=OUT):
    os.makedirs(out, exist_ok=True)
    rows = [
        TraceRow("cnn-serving", tuple(diurnal(180, 60))),
        TraceRow("float", tuple(bursty(120, 480, every=7, width=2))),
        TraceRow("pyaes", tuple(diurnal(90, 30, phase_min=360))),
        TraceRow("linpack", tuple(bursty(0, 40, every=3, width=1))),
    ]
    write_trace(os.path.join(out, "azure_sample.csv"), rows)

    bases = {"spain": 150.0, "france": 200.0, "belgium": 250.0, "netherlands": 300.0}
    samples = []
    for region, base in bases.items():
        for k in range(MINUTES_PER_DAY // 5 + 1):
            t = START_EPOCH + 300 * k
            samples.append(MOERSample(region, t, round(base + 18.0 * math.sin(2 * math.pi * k / 288), 3), G_PER_KWH))
    write_carbon_trace(os.path.join(out, "carbon_eu.csv"), samples)


if __name__ == "__main__":
    main(*sys.argv[1:])
