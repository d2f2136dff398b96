"""Ablation and baseline comparison on synthetic data, averaged over seeds.

    python scripts/run_ablation.py --seeds 5 --maven-weight 0.9
"""

import argparse
import logging
import time

import numpy as np

from mavenrec import synth
from mavenrec.experiments import evaluate_run, maven_recovery, run_seed, summarize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--maven-weight", type=float, default=0.9)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--variants", default="siagr,siagr-g,siagr-m")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    overrides = {"epochs": args.epochs} if args.epochs else {}
    variants = tuple(args.variants.split(","))
    cfg = synth.SynthConfig(maven_weight=args.maven_weight)
    reports, recov = [], []
    t0 = time.time()
    for seed in range(args.seeds):
        run = run_seed(cfg, seed, variants, **overrides)
        methods = [v for v in variants] + (["ncf-avg", "ncf-lm"] if "siagr" in variants else [])
        rep = evaluate_run(run, methods=methods)
        reports.append(rep)
        if "siagr" in run.models:
            recov.append(maven_recovery(run.models["siagr"], run.split.train, run.truth.maven_of))
        print(f"seed {seed} ({time.time() - t0:.0f}s):",
              {m: round(r.hr[10], 3) for m, r in rep.methods.items()},
              f"recovery={recov[-1]:.3f}" if recov else "", flush=True)
    print("\nmethod     HR@5    HR@10   MRR")
    for m, v in summarize(reports).items():
        print(f"{m:<10} {v['HR@5']:.4f}  {v['HR@10']:.4f}  {v['MRR']:.4f}")
    if recov:
        print(f"maven recovery (size>=3): {np.mean(recov):.3f}")


if __name__ == "__main__":
    main()
