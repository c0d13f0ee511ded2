#!/usr/bin/env python3
"""Accuracy-vs-epsilon sweep on the generated Iris DIKW data.

    python3 scripts/run_case_study.py [--config cfg.yaml] [--out runs/case_study]

Writes the usual run directory (curves, traces, sweep.csv) and prints each
curve next to the clean baseline.
"""
import argparse
import time

from dikwdp.bench import ExperimentConfig, load_config, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/case_study")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()

    t0 = time.perf_counter()
    res = run_sweep(cfg, args.out)
    elapsed = time.perf_counter() - t0

    eps = sorted({r.epsilon for r in res.rows})
    print(f"mode {res.mode}, support {', '.join(res.support)}")
    print(f"clean baseline B = {res.baseline_accuracy:.4f}  ({cfg.repetitions} repetitions, {elapsed:.1f}s)")
    print("fraction " + "".join(f"{'eps=' + format(e, 'g'):>16}" for e in eps))
    for frac in sorted({r.retained_fraction for r in res.rows}):
        cells = []
        for e in eps:
            r = res.row(e, frac)
            cells.append(f"{'absent':>16}" if r.absent else f"{r.mean_accuracy:>9.3f} ±{r.accuracy_std:.3f}")
        print(f"{frac:>8g} " + "".join(cells))
    print(f"run directory: {args.out}")


if __name__ == "__main__":
    main()
