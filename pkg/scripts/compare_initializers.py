#!/usr/bin/env python3
"""Error of each initializer alone and after the cascade refines it."""

import argparse

from iin.evaluation import compare_initializers
from iin.imputer import TrainConfig
from iin.ingest import MissingSpec, simulate_missing
from iin.initializers import parse_kind
from iin.synthetic import GeneratorSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", default="temporal_nearest,window_mean:3,global_mean,spatial_temporal_combo")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--iters", type=int, default=3)
    args = ap.parse_args()

    ds = simulate_missing(generate(GeneratorSpec(steps=args.steps)), MissingSpec(rate=0.2, seed=7))
    kinds = [parse_kind(k) for k in args.kinds.split(",")]
    print(f"{'initializer':<28} {'init MAE':>9} {'final MAE':>10}")
    for row in compare_initializers(ds, kinds, TrainConfig(iter_num=args.iters)):
        print(f"{row['kind']:<28} {row['init_mae']:9.4f} {row['final_mae']:10.4f}")


if __name__ == "__main__":
    main()
