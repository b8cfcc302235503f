#!/usr/bin/env python3
"""Sum-throughput ratio of the stopping scheduler to genie-aided PF versus beta.

At K = 20 with exponential fading the ratio depends strongly on the
probing fraction; this prints simulated and analytic values side by side.

    python3 scripts/headline_ratio.py --betas 0.03 0.05 0.08 0.1 --threads 8
"""

import argparse

from jpspf.analysis import analytic_gain, gain_genie
from jpspf.channel import RateModel
from jpspf.sim import ExperimentConfig, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=20)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.03, 0.05, 0.07, 0.1, 0.15])
    ap.add_argument("--slots", type=int, default=20_000)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    model = RateModel.exponential()
    print("beta,sim_ratio_pct,theory_ratio_pct")
    for beta in args.betas:
        cfg = ExperimentConfig(K=args.K, beta=beta, n_slots=args.slots,
                               n_replications=args.reps, rate_model=model)
        jps, _ = run_experiment(cfg, args.threads)
        ga, _ = run_experiment(cfg.with_policy("genie_pf"), args.threads)
        sim = 100 * jps["sum_throughput"]["mean"] / ga["sum_throughput"]["mean"]
        theory = 100 * analytic_gain(model, beta, args.K)[1] / gain_genie(model, args.K)
        print(f"{beta},{sim:.2f},{theory:.2f}", flush=True)


if __name__ == "__main__":
    main()
