"""Experiment orchestration: epsilon sweeps, verifier runs and curve emission.

Everything a run writes is a function of the resolved config and its master
seed; files carry no timestamps or host information.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .dikw import DikwDataset, DikwError, MaskPlan, PrivacyMode, load_dataset, mode_mask, parse_mode
from .generate import GenSpec, generate_iris_dikw
from .mechanisms import (DpParams, apply_dp, budget_summary, laplace_mechanism, mode_order_suggestion,
                         resolve_sensitivity, rr_mechanism, verify_epsilon)
from .rng import derive_seed
from .swarm import STWeights, SwarmConfig, decide_mode, optimize_mask
from .utility import (FitnessWeights, coverage, evaluate_utility, masked_variance_ratio,
                      stratified_split)

log = logging.getLogger(__name__)

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- configuration

@dataclass(frozen=True)
class DatasetSource:
    kind: str = "generated"          # "generated" | "files"
    data_file: str | None = None
    schema_file: str | None = None
    generator_seed: int = 0
    source_file: str | None = None   # raw Iris table for the generator; bundled copy when None

    def load(self) -> DikwDataset:
        if self.kind == "generated":
            return generate_iris_dikw(GenSpec(source_file=self.source_file, seed=self.generator_seed))
        if self.kind == "files":
            if not (self.data_file and self.schema_file):
                raise ConfigError("dataset kind 'files' needs data_file and schema_file")
            return load_dataset(self.data_file, self.schema_file)
        raise ConfigError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class VerifyCase:
    mechanism: str                    # "laplace" | "randomized_response"
    epsilon: float                    # epsilon the mechanism actually runs at
    claimed_epsilon: float | None = None
    value_a: Any = 0.0
    value_b: Any = 1.0
    sensitivity: float = 1.0
    labels: tuple = ()


def default_verify_cases() -> tuple[VerifyCase, ...]:
    ln3 = math.log(3.0)
    return (
        VerifyCase("randomized_response", ln3, ln3, "a", "b", labels=("a", "b")),
        VerifyCase("laplace", 1.0, 1.0, 0.0, 1.0, sensitivity=1.0),
        VerifyCase("laplace", 1.0, 0.5, 0.0, 1.0, sensitivity=1.0),
        VerifyCase("laplace", 1.0, 1.0, 0.0, 0.0, sensitivity=1.0),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource = DatasetSource()
    mode: str = "DIKDP"
    epsilon_grid: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 4.0)
    retained_fraction_targets: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    swarm: SwarmConfig = SwarmConfig(particle_count=12, max_iterations=15)
    dp: DpParams = DpParams(epsilon=1.0)
    weights: FitnessWeights = FitnessWeights()
    repetitions: int = 10
    seed: int = 0
    train_fraction: float = 0.7
    tau: float = 0.5
    bisection_rounds: int = 12
    verify_cases: tuple[VerifyCase, ...] = field(default_factory=default_verify_cases)
    verify_draws: int = 100_000
    verify_bins: int = 20
    output_dir: str = "runs/default"

    def __post_init__(self):
        if not self.epsilon_grid or not self.retained_fraction_targets:
            raise ConfigError("epsilon grid and retained-fraction targets must be non-empty")
        if any(not e > 0 for e in self.epsilon_grid):
            raise ConfigError("epsilon grid values must be positive")
        if any(not 0 < f <= 1 for f in self.retained_fraction_targets):
            raise ConfigError("retained-fraction targets must lie in (0, 1]")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.mode.lower() != "auto":
            parse_mode(self.mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dp"] = {"epsilon": self.dp.epsilon, "sensitivity": dict(self.dp.sensitivity)}
        d["verify_cases"] = [asdict(c) | {"labels": list(c.labels)} for c in self.verify_cases]
        d["epsilon_grid"] = list(self.epsilon_grid)
        d["retained_fraction_targets"] = list(self.retained_fraction_targets)
        return {"format_version": CONFIG_VERSION, **d}


def _sub(cls, raw: dict | None, where: str):
    raw = dict(raw or {})
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    version = raw.pop("format_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config format_version {version!r}")
    kw: dict[str, Any] = {}
    try:
        if "dataset" in raw:
            kw["dataset"] = _sub(DatasetSource, raw.pop("dataset"), "dataset")
        if "swarm" in raw:
            sw = dict(raw.pop("swarm") or {})
            st = sw.pop("st_weights", None)
            kw["swarm"] = _sub(SwarmConfig, sw | {"st_weights": _sub(STWeights, st, "st_weights") if st else None},
                               "swarm")
        if "dp" in raw:
            dp = dict(raw.pop("dp") or {})
            kw["dp"] = DpParams(float(dp.get("epsilon", 1.0)),
                                {k: float(v) for k, v in (dp.get("sensitivity") or {}).items()})
        if "weights" in raw:
            kw["weights"] = _sub(FitnessWeights, raw.pop("weights"), "weights")
        if "verify_cases" in raw:
            kw["verify_cases"] = tuple(
                _sub(VerifyCase, dict(c) | {"labels": tuple(c.get("labels", ()))}, "verify_cases")
                for c in raw.pop("verify_cases"))
        for key in ("epsilon_grid", "retained_fraction_targets"):
            if key in raw:
                kw[key] = tuple(float(x) for x in raw.pop(key))
        kw.update(raw)
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh) or {})


def dump_config(config: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


# --------------------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    retained_fraction: float
    mean_accuracy: float | None
    accuracy_std: float | None
    repetitions: int
    seed: int
    achieved_fraction: float | None = None
    absent_reason: str | None = None

    @property
    def absent(self) -> bool:
        return self.mean_accuracy is None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    mode: str
    baseline_accuracy: float
    support: tuple[str, ...]

    def row(self, epsilon: float, fraction: float) -> SweepRow:
        for r in self.rows:
            if r.epsilon == epsilon and r.retained_fraction == fraction:
                return r
        raise KeyError((epsilon, fraction))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "baseline_accuracy": self.baseline_accuracy,
            "support": list(self.support),
            "rows": [asdict(r) for r in self.rows],
        }


def acceptable_counts(fraction: float, support_size: int) -> list[int]:
    """Retained counts within one item of ``fraction * support_size`` (at least one item)."""
    target = fraction * support_size
    return [k for k in range(1, support_size + 1) if abs(k - target) <= 1]


def resolve_mode(config: ExperimentConfig, dataset: DikwDataset) -> PrivacyMode:
    """Fixed mode, or for ``auto``: optimise the first suggested mode and let decide_mode chain upward."""
    if config.mode.lower() != "auto":
        return parse_mode(config.mode)
    order = [m for m in mode_order_suggestion(dataset) if m is not PrivacyMode.PDP]
    if not order:
        raise DikwError("no privacy mode has a non-empty support on this dataset")
    first = order[0]
    split = stratified_split(dataset, config.train_fraction, derive_seed(config.seed, "auto", "split"))
    train, holdout = dataset.subset(split.train), dataset.subset(split.holdout)
    params = DpParams(config.dp.epsilon, resolve_sensitivity(dataset, config.dp))
    support = mode_mask(dataset, first)
    noise_seed = derive_seed(config.seed, "auto", "noise")

    def fit(mask):
        acc = evaluate_utility(apply_dp(train, mask, params, noise_seed), holdout).accuracy
        return config.weights.lambda_utility * acc + config.weights.lambda_privacy_coverage * coverage(mask, support)

    res = optimize_mask(dataset, first, fit, replace(config.swarm, seed=derive_seed(config.seed, "auto", "pso")))
    if res.best_mask.count == 0:
        return first
    return decide_mode(dataset, res.best_mask, config.tau)


@dataclass
class CellOutcome:
    accuracy: float
    mask: MaskPlan
    trace: list[dict]
    lambda_coverage: float | None
    bisection_rounds: int
    bisection_hit: bool


def repetition_split(dataset: DikwDataset, config: ExperimentConfig, rep: int):
    # one split per repetition, shared by every cell, so cells differ only in epsilon and mask
    return stratified_split(dataset, config.train_fraction, derive_seed(config.seed, "split", rep))


def _run_cell(dataset: DikwDataset, mode: PrivacyMode, support: MaskPlan, epsilon: float,
              fraction: float, sensitivity: dict, config: ExperimentConfig, cell_seed: int,
              split) -> CellOutcome | None:
    train, holdout = dataset.subset(split.train), dataset.subset(split.holdout)
    params = DpParams(epsilon, sensitivity)
    search_seed = derive_seed(cell_seed, "search")
    eval_seed = derive_seed(cell_seed, "eval")
    n = support.count

    traces: list[dict] = []
    rounds = 0
    lam = None
    hit = True
    if fraction >= 1.0:
        mask = support
    else:
        allowed = acceptable_counts(fraction, n)
        if not allowed:
            return None
        acc_cache: dict[MaskPlan, float] = {}

        def accuracy(mask: MaskPlan) -> float:
            if mask not in acc_cache:
                noised = apply_dp(train, mask, params, search_seed)
                acc_cache[mask] = evaluate_utility(noised, holdout).accuracy
            return acc_cache[mask]

        def variance(mask: MaskPlan) -> float:
            if not any(dataset.item(i).is_numeric for i in mask.selected_ids):
                return math.nan
            return masked_variance_ratio(train, apply_dp(train, mask, params, search_seed), mask)

        lam_u = config.weights.lambda_utility
        lo, hi = 0.0, 2.0 * n * max(lam_u, 1.0)
        swarm_cfg = replace(config.swarm, seed=derive_seed(cell_seed, "pso"))
        lam = config.weights.lambda_privacy_coverage
        mask = None
        for rounds in range(1, config.bisection_rounds + 1):
            def fit(m, lam=lam):
                u = lam_u * accuracy(m) if lam_u else 0.0
                return u + lam * coverage(m, support)

            res = optimize_mask(dataset, mode, fit, swarm_cfg, variance_fn=variance)
            traces.append({"round": rounds, "lambda_coverage": lam, "retained": res.best_mask.count,
                           "converged_early": res.converged_early, "trace": res.trace.to_dicts()})
            count = res.best_mask.count
            if count in allowed:
                mask = res.best_mask
                break
            if count < min(allowed):
                lo = lam
            else:
                hi = lam
            lam = 0.5 * (lo + hi)
        if mask is None:
            # bisection exhausted: best-accuracy mask of an acceptable size among those evaluated
            hit = False
            ok = [m for m in acc_cache if m.count in allowed]
            if not ok:
                return None
            mask = max(ok, key=lambda m: (acc_cache[m], m.selected))

    noised = apply_dp(train, mask, params, eval_seed)
    acc = evaluate_utility(noised, holdout).accuracy
    return CellOutcome(acc, mask, traces, lam, rounds, hit)


def baseline_accuracy(dataset: DikwDataset, config: ExperimentConfig) -> float:
    """Mean clean accuracy over the per-repetition splits the sweep uses."""
    accs = []
    for rep in range(config.repetitions):
        split = repetition_split(dataset, config, rep)
        accs.append(evaluate_utility(dataset.subset(split.train), dataset.subset(split.holdout)).accuracy)
    return float(np.mean(accs))


def run_sweep(config: ExperimentConfig, out_dir: str | Path | None = None,
              dataset: DikwDataset | None = None) -> SweepResult:
    """Accuracy over the epsilon grid for each retained-fraction target.

    With ``out_dir`` the run directory receives the resolved config, the
    per-cell traces, ``sweep.csv``, the curve files and a version stamp.
    """
    dataset = dataset if dataset is not None else config.dataset.load()
    mode = resolve_mode(config, dataset)
    support = mode_mask(dataset, mode)
    if support.count == 0:
        raise DikwError(f"mode {mode.value} selects no items on this dataset")
    sensitivity = resolve_sensitivity(dataset, config.dp)

    splits = [repetition_split(dataset, config, rep) for rep in range(config.repetitions)]
    rows = []
    cell_logs = []
    for ei, eps in enumerate(config.epsilon_grid):
        for fi, frac in enumerate(config.retained_fraction_targets):
            accs, fracs, logs = [], [], []
            reason = None
            for rep in range(config.repetitions):
                cell_seed = derive_seed(config.seed, "cell", fi, rep)
                out = _run_cell(dataset, mode, support, eps, frac, sensitivity, config, cell_seed,
                                splits[rep])
                if out is None:
                    reason = f"no mask of {frac:g} x {support.count} items (+-1) is reachable"
                    break
                accs.append(out.accuracy)
                fracs.append(out.mask.count / support.count)
                logs.append({"repetition": rep, "seed": cell_seed, "accuracy": out.accuracy,
                             "mask": list(out.mask.selected_ids), "lambda_coverage": out.lambda_coverage,
                             "bisection_rounds": out.bisection_rounds, "bisection_hit": out.bisection_hit,
                             "budget": budget_summary(DpParams(eps, sensitivity), out.mask),
                             "search": out.trace})
            master = config.seed
            if reason:
                log.warning("cell eps=%g fraction=%g absent: %s", eps, frac, reason)
                rows.append(SweepRow(eps, frac, None, None, config.repetitions, master, None, reason))
            else:
                rows.append(SweepRow(eps, frac, float(np.mean(accs)), float(np.std(accs)),
                                     config.repetitions, master, float(np.mean(fracs))))
            cell_logs.append(((ei, fi), logs))

    result = SweepResult(rows, mode.value, baseline_accuracy(dataset, config), support.selected_ids)
    if out_dir is not None:
        _write_run(Path(out_dir), config, result, cell_logs)
    return result


def _write_run(out: Path, config: ExperimentConfig, result: SweepResult, cell_logs) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.resolved.yaml")
    (out / "VERSION").write_text(f"dikwdp {__version__}\n", encoding="utf-8")
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for (ei, fi), logs in cell_logs:
        with open(traces / f"cell_e{ei}_f{fi}.jsonl", "w", encoding="utf-8") as fh:
            for entry in logs:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "retainedFraction", "meanAccuracy", "accuracyStdDev", "repetitions", "seed"])
        for r in result.rows:
            w.writerow([repr(r.epsilon), repr(r.retained_fraction),
                        "" if r.absent else repr(r.mean_accuracy),
                        "" if r.absent else repr(r.accuracy_std), r.repetitions, r.seed])
    emit_curves(result, out)


def emit_curves(result: SweepResult, out_dir: str | Path) -> list[Path]:
    """One headed CSV per retained fraction (epsilon, meanAccuracy, accuracyStdDev) plus summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    fractions = sorted({r.retained_fraction for r in result.rows})
    for frac in fractions:
        rows = sorted((r for r in result.rows if r.retained_fraction == frac and not r.absent),
                      key=lambda r: r.epsilon)
        path = out / f"curve_fraction_{frac:g}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "meanAccuracy", "accuracyStdDev"])
            for r in rows:
                w.writerow([repr(r.epsilon), repr(r.mean_accuracy), repr(r.accuracy_std)])
        written.append(path)
    summary = out / "summary.json"
    summary.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(summary)
    return written


# --------------------------------------------------------------------------- verification

@dataclass(frozen=True)
class VerifyOutcome:
    case: VerifyCase
    empirical_epsilon: float | None
    slack: float
    status: str          # "pass" | "fail" | "inconclusive"

    def to_dict(self) -> dict:
        return {"mechanism": self.case.mechanism, "epsilon": self.case.epsilon,
                "claimed_epsilon": self.claimed, "value_a": self.case.value_a, "value_b": self.case.value_b,
                "empirical_epsilon": self.empirical_epsilon, "slack": self.slack, "status": self.status}

    @property
    def claimed(self) -> float:
        return self.case.epsilon if self.case.claimed_epsilon is None else self.case.claimed_epsilon


def run_verify(config: ExperimentConfig, out_dir: str | Path | None = None) -> list[VerifyOutcome]:
    """Empirical epsilon for each configured case, judged against the claimed epsilon."""
    outcomes = []
    for k, case in enumerate(config.verify_cases):
        if case.mechanism == "laplace":
            mech = laplace_mechanism(case.sensitivity, case.epsilon)
            a, b = float(case.value_a), float(case.value_b)
        elif case.mechanism in ("randomized_response", "randomizedResponse"):
            mech = rr_mechanism(case.labels, case.epsilon)
            a, b = case.value_a, case.value_b
        else:
            raise ConfigError(f"unknown mechanism {case.mechanism!r}")
        claimed = case.epsilon if case.claimed_epsilon is None else case.claimed_epsilon
        res = verify_epsilon(mech, a, b, claimed, config.verify_draws, config.verify_bins,
                             seed=derive_seed(config.seed, "verify", k))
        passed = res.passes(claimed)
        status = "inconclusive" if passed is None else ("pass" if passed else "fail")
        outcomes.append(VerifyOutcome(case, res.empirical_epsilon, res.slack, status))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verify.jsonl", "w", encoding="utf-8") as fh:
            for o in outcomes:
                fh.write(json.dumps(o.to_dict(), sort_keys=True) + "\n")
    return outcomes
