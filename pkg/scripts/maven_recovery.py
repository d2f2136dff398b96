"""How often the strongest attention lands on the planted maven, per maven weight.

    python scripts/maven_recovery.py --seeds 5 --maven-weights 0.6,0.8,0.95
"""

import argparse
import logging

import numpy as np

from mavenrec import synth
from mavenrec.experiments import maven_recovery, run_seed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--maven-weights", default="0.8")
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--min-size", type=int, default=3)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    overrides = {"epochs": args.epochs} if args.epochs else {}

    for mw in (float(w) for w in args.maven_weights.split(",")):
        scores = []
        for seed in range(args.seeds):
            run = run_seed(synth.SynthConfig(maven_weight=mw), seed, ("siagr",), **overrides)
            scores.append(maven_recovery(run.models["siagr"], run.split.train, run.truth.maven_of, args.min_size))
        # chance level: mean 1/|group| over the groups that count
        sizes = run.store.roster.sizes
        chance = float(np.mean(1 / sizes[sizes >= args.min_size]))
        print(f"maven_weight={mw}: recovery {np.mean(scores):.3f} "
              f"(seeds {[round(s, 3) for s in scores]}, chance ~{chance:.3f})", flush=True)


if __name__ == "__main__":
    main()
