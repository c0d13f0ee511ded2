#!/usr/bin/env python3
"""How often the sign-valued swarm finds the exhaustive optimum on small supports.

Random linear and quadratic fitness instances over n binary coordinates,
each searched from many seeds; the optimum comes from enumerating all 2^n
masks.  Used to pick the swarm size for the brute-force acceptance check.
"""
import argparse
import itertools
import time

import numpy as np

from dikwdp.dikw import Category, DikwDataset, DikwItem, Modal
from dikwdp.swarm import SwarmConfig, optimize_mask


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--instances", type=int, default=30)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--particles", type=int, nargs="+", default=[20, 30, 40])
    ap.add_argument("--iterations", type=int, default=40)
    ap.add_argument("--momentum", choices=["sign", "real"], default="sign")
    args = ap.parse_args()

    n = args.n
    items = tuple(DikwItem(f"c{k}", f"c{k}", Modal.DATA, Category.WHO) for k in range(n))
    ds = DikwDataset(items, tuple(np.zeros(2) for _ in items))
    B = np.array(list(itertools.product([0, 1], repeat=n)), dtype=float)

    instances = []
    for k in range(args.instances):
        rng = np.random.default_rng(1000 + k)
        w = rng.normal(size=n)
        Q = rng.normal(size=(n, n)) * 0.3 * (k % 2)   # odd instances carry pairwise terms
        Q = (Q + Q.T) / 2
        best = float((B @ w + np.einsum("ij,jk,ik->i", B, Q, B)).max())
        instances.append((w, Q, best))

    runs = args.instances * args.seeds
    for P in args.particles:
        t0 = time.perf_counter()
        below, exact, evals = 0, 0, []
        for w, Q, best in instances:
            def fit(mask, w=w, Q=Q):
                b = mask.as_array().astype(float)
                return float(w @ b + b @ Q @ b)

            for seed in range(args.seeds):
                cfg = SwarmConfig(particle_count=P, max_iterations=args.iterations, seed=seed,
                                  momentum=args.momentum)
                res = optimize_mask(ds, "DDP", fit, cfg)
                below += res.best_fitness < 0.95 * best
                exact += np.isclose(res.best_fitness, best)
                evals.append(res.trace.records[-1].evaluations)
        print(f"particles {P:>3}: {exact}/{runs} exact, {below}/{runs} below 95% of optimum, "
              f"mean {np.mean(evals):.0f} of {2 ** n} masks evaluated ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
