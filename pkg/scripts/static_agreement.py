#!/usr/bin/env python3
"""Per-slot agreement between the static-threshold and dynamic stopping rules.

Two measurements on the same rate streams:
  shadow  the static rule is asked, every slot, to decide on the dynamic
          scheduler's own throughputs
  paired  the two schedulers run independently and their decisions are
          compared slot by slot
"""

import argparse

import numpy as np

from jpspf.channel import RateModel
from jpspf.sim import ExperimentConfig, paired_agreement, shadow_agreement, analytic_kappa


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=20)
    ap.add_argument("--beta", type=float, default=0.1)
    ap.add_argument("--slots", type=int, nargs="+", default=[20_000, 100_000])
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()

    model = RateModel.exponential()
    kappa = analytic_kappa(model, args.beta, args.K)
    print(f"kappa = {kappa:.5f}")
    print("n_slots,shadow_mean,shadow_min,paired_mean")
    for n in args.slots:
        cfg = ExperimentConfig(K=args.K, beta=args.beta, n_slots=n)
        sh = [shadow_agreement(cfg, kappa, r) for r in range(args.reps)]
        pa = [paired_agreement(cfg, kappa, r) for r in range(args.reps)]
        print(f"{n},{np.mean(sh):.4f},{min(sh):.4f},{np.mean(pa):.4f}", flush=True)


if __name__ == "__main__":
    main()
