"""Time one training epoch and one evaluation on CAMRa2011-shaped synthetic data."""

import argparse
import time

from mavenrec import data, evaluation, synth, training
from mavenrec.model import Siagr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    t0 = time.perf_counter()
    store, _ = synth.generate(synth.camra2011_shaped(seed=args.seed))
    print(f"generated {store.n_groups} groups, {store.n_users} users, {store.n_items} items "
          f"in {time.perf_counter() - t0:.1f}s")
    split = data.split_leave_one_out(store, args.seed)
    cfg = training.TrainConfig(epochs=1, seed=args.seed)
    t0 = time.perf_counter()
    params, hist = training.fit(split.train, cfg)
    print(f"1 epoch: {time.perf_counter() - t0:.1f}s (group loss {hist.group_loss[0]:.4f})")
    t0 = time.perf_counter()
    rep = evaluation.evaluate(Siagr(cfg.model, params, store.roster), split.test, store, 100,
                              seed=args.seed, threads=args.threads)
    print(f"evaluation: {time.perf_counter() - t0:.1f}s")
    for m, r in rep.methods.items():
        print(f"  {m:<8} HR@5 {r.hr[5]:.3f}  HR@10 {r.hr[10]:.3f}  MRR {r.mrr:.3f}")


if __name__ == "__main__":
    main()
