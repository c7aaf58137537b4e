#!/usr/bin/env python3
"""Recovery error against the fraction of held-out entries."""

import argparse

from iin.evaluation import DEFAULT_RATES, sweep_missing_rates
from iin.imputer import TrainConfig
from iin.synthetic import GeneratorSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", default=",".join(map(str, DEFAULT_RATES)))
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = generate(GeneratorSpec(steps=args.steps))
    rates = [float(r) for r in args.rates.split(",")]
    results = sweep_missing_rates(ds, rates, TrainConfig(iter_num=args.iters, seed=args.seed))
    print("rate   T_0 MAE  final MAE  final MRE  general MAE")
    for rate, rep in results:
        print(f"{rate:4.2f}  {rep.trajectory[0]['overall'].mae:8.4f}  {rep.overall.mae:9.4f}  "
              f"{rep.overall.mre:9.4f}  {rep.general.mae:11.4f}")


if __name__ == "__main__":
    main()
