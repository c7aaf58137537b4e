#!/usr/bin/env python3
"""End-to-end benchmark on the generated 3-sensor fixture.

Holds out 20% of the observed entries, runs the cascade from a
nearest-in-time fill and prints the per-round error trajectory.
"""

import argparse
import json
import time

from iin.evaluation import score
from iin.imputer import TrainConfig, run_cascade
from iin.ingest import MissingSpec, simulate_missing
from iin.initializers import parse_kind
from iin.synthetic import GeneratorSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sensors", type=int, default=3)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--rate", type=float, default=0.2)
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--window", type=int, default=12)
    ap.add_argument("--cell", default="standard", choices=["standard", "phased"])
    ap.add_argument("--init", default="temporal_nearest")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None, help="write the full report here")
    args = ap.parse_args()

    ds = generate(GeneratorSpec(sensors=args.sensors, steps=args.steps, seed=1))
    ds = simulate_missing(ds, MissingSpec(rate=args.rate, seed=7))
    config = TrainConfig(w=args.window, iter_num=args.iters, cell_kind=args.cell, seed=args.seed)

    t0 = time.perf_counter()
    run = run_cascade(ds, config, parse_kind(args.init))
    report = score(run, ds)
    elapsed = time.perf_counter() - t0

    print(f"holdout entries: {report.counts['holdout']} ({report.counts['block_resident']} in blocks)")
    print("round  overall MAE  overall MRE  general MAE  val MAE")
    for i, step in enumerate(report.trajectory):
        val = f"{run.val_mae[i - 1]:.4f}" if i else "-"
        print(f"{i:>5}  {step['overall'].mae:11.4f}  {step['overall'].mre:11.4f}  "
              f"{step['general'].mae:11.4f}  {val}")
    first, last = report.trajectory[0]["overall"].mae, report.overall.mae
    print(f"reduction vs T_0: {1 - last / first:.1%} in {elapsed:.0f}s")
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report.to_json())


if __name__ == "__main__":
    main()
