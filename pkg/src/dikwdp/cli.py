"""Command-line entry point: ``dikwdp <verb> [--config PATH] [--seed N] [--out DIR] [--mode MODE]``.

Exit codes: 0 success, 1 validation error (bad config, schema, data or mask),
2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import (ConfigError, ExperimentConfig, emit_curves, load_config, resolve_mode, run_sweep,
                    run_verify)
from .dikw import DikwError, MaskPlan, mode_mask, save_dataset
from .generate import GenSpec, generate_iris_dikw, validate_generated
from .mechanisms import DpParams, apply_dp, resolve_sensitivity
from .rng import derive_seed
from .swarm import decide_mode, optimize_mask
from .utility import coverage, evaluate_utility, stratified_split

log = logging.getLogger("dikwdp")

MODES = ("DDP", "IDP", "KDP", "DIDP", "IKDP", "DIKDP", "PDP", "auto")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=args.mode)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_generate(args, cfg: ExperimentConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.dataset.generator_seed
    ds = generate_iris_dikw(GenSpec(source_file=cfg.dataset.source_file, seed=seed))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out / "iris_dikw.csv", out / "iris_dikw.schema.yaml")
    report = validate_generated(ds)
    for v in report.violations:
        print(f"violation: {v}")
    print(f"wrote {ds.n_records} records x {len(ds.items)} items to {out}")
    return 0 if report.ok else 1


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    result = run_sweep(cfg, cfg.output_dir)
    print(f"mode {result.mode}  baseline accuracy {result.baseline_accuracy:.4f}")
    print(f"{'epsilon':>8} {'fraction':>8} {'accuracy':>9} {'stddev':>7}")
    for r in result.rows:
        acc = "absent" if r.absent else f"{r.mean_accuracy:.4f}"
        sd = "" if r.absent else f"{r.accuracy_std:.4f}"
        print(f"{r.epsilon:>8g} {r.retained_fraction:>8g} {acc:>9} {sd:>7}")
    return 0


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    for o in run_verify(cfg, cfg.output_dir):
        eps = "n/a" if o.empirical_epsilon is None else f"{o.empirical_epsilon:.4f}"
        print(f"{o.status:>12}  {o.case.mechanism:<20} claimed={o.claimed:.4f} "
              f"empirical={eps} slack={o.slack:.4f}")
    return 0


def _optimize(cfg: ExperimentConfig, dataset):
    mode = resolve_mode(cfg, dataset)
    split = stratified_split(dataset, cfg.train_fraction, derive_seed(cfg.seed, "split", 0))
    train, holdout = dataset.subset(split.train), dataset.subset(split.holdout)
    params = DpParams(cfg.dp.epsilon, resolve_sensitivity(dataset, cfg.dp))
    support = mode_mask(dataset, mode)
    noise_seed = derive_seed(cfg.seed, "optimize", "noise")

    def fit(mask):
        acc = evaluate_utility(apply_dp(train, mask, params, noise_seed), holdout).accuracy
        return cfg.weights.lambda_utility * acc + cfg.weights.lambda_privacy_coverage * coverage(mask, support)

    swarm = replace(cfg.swarm, seed=derive_seed(cfg.seed, "optimize", "pso"))
    return mode, optimize_mask(dataset, mode, fit, swarm)


def cmd_optimize(args, cfg: ExperimentConfig) -> int:
    dataset = cfg.dataset.load()
    mode, res = _optimize(cfg, dataset)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for rec in res.trace.to_dicts():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    summary = {"mode": mode.value, "best_fitness": res.best_fitness,
               "selected": list(res.best_mask.selected_ids), "support": list(res.support),
               "iterations": len(res.trace) - 1, "converged_early": res.converged_early}
    (out / "optimize.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_decide_mode(args, cfg: ExperimentConfig) -> int:
    dataset = cfg.dataset.load()
    if args.mask:
        mask = MaskPlan.from_ids(dataset, [s.strip() for s in args.mask.split(",") if s.strip()])
    else:
        _, res = _optimize(cfg, dataset)
        mask = res.best_mask
    mode = decide_mode(dataset, mask, cfg.tau if args.tau is None else args.tau)
    print(json.dumps({"retained": list(mask.selected_ids), "mode": mode.value}))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "optimize": cmd_optimize,
    "decide-mode": cmd_decide_mode,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dikwdp", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML, format_version: 1)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--mode", choices=MODES, help="privacy mode (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the extended Iris DIKW data + schema pair")
    sub.add_parser("sweep", parents=[common], help="accuracy over the epsilon grid per retained fraction")
    sub.add_parser("verify", parents=[common], help="empirical epsilon checks of the mechanisms")
    sub.add_parser("optimize", parents=[common], help="one PSO mask search")
    dm = sub.add_parser("decide-mode", parents=[common], help="privacy mode implied by a retained mask")
    dm.add_argument("--mask", help="comma-separated retained item ids (default: run optimize)")
    dm.add_argument("--tau", type=float, help="association threshold (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, DikwError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
