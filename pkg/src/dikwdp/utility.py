"""Utility side of the trade-off: a Gaussian naive-Bayes classifier and the PSO fitness."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dikw import DikwDataset, DikwError, MaskPlan, check_mask
from .mechanisms import DpParams, apply_dp
from .rng import stream

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-9


@dataclass(frozen=True)
class FitnessWeights:
    lambda_utility: float = 1.0
    lambda_privacy_coverage: float = 0.5

    def __post_init__(self):
        if self.lambda_utility < 0 or self.lambda_privacy_coverage < 0:
            raise ValueError("fitness weights must be non-negative")
        if self.lambda_utility == 0 and self.lambda_privacy_coverage == 0:
            raise ValueError("fitness weights cannot both be zero")


@dataclass(frozen=True)
class UtilityReport:
    accuracy: float
    per_class_accuracy: dict
    train_fraction: float | None = None
    fold_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": dict(self.per_class_accuracy),
            "train_fraction": self.train_fraction,
            "fold_seed": self.fold_seed,
        }


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    holdout: np.ndarray
    train_fraction: float
    seed: int


def stratified_split(dataset: DikwDataset, train_fraction: float = 0.7, seed: int = 0) -> Split:
    """Seeded per-class split; each class contributes ``round(train_fraction * size)`` training records."""
    if dataset.class_label is None:
        raise DikwError("stratified split needs a class label")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    y = dataset.column(dataset.class_label)
    rng = stream(seed, "split")
    train, holdout = [], []
    for cls in sorted(set(y.tolist()), key=str):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(train_fraction * idx.size))
        train.extend(idx[:k].tolist())
        holdout.extend(idx[k:].tolist())
    return Split(np.sort(np.array(train, dtype=int)), np.sort(np.array(holdout, dtype=int)),
                 train_fraction, seed)


@dataclass(frozen=True, eq=False)
class GnbModel:
    classes: tuple
    log_prior: np.ndarray
    numeric_ids: tuple[str, ...]
    means: np.ndarray        # (classes, numeric features)
    variances: np.ndarray
    categorical: Mapping[str, tuple[tuple[str, ...], np.ndarray]]  # id -> (labels, log-probs (classes, labels))

    def joint_log_likelihood(self, dataset: DikwDataset) -> np.ndarray:
        n = dataset.n_records
        jll = np.tile(self.log_prior, (n, 1))
        if self.numeric_ids:
            X = np.column_stack([dataset.column(i) for i in self.numeric_ids])
            for c in range(len(self.classes)):
                var = self.variances[c]
                jll[:, c] += -0.5 * np.sum(np.log(2 * np.pi * var)) \
                    - 0.5 * np.sum((X - self.means[c]) ** 2 / var, axis=1)
        for item_id, (labels, logp) in self.categorical.items():
            pos = {lab: k for k, lab in enumerate(labels)}
            col = dataset.column(item_id)
            # unseen labels contribute nothing
            k = np.array([pos.get(v, -1) for v in col.tolist()], dtype=int)
            seen = k >= 0
            jll[seen] += logp[:, k[seen]].T
        return jll

    def predict(self, dataset: DikwDataset) -> np.ndarray:
        jll = self.joint_log_likelihood(dataset)
        out = np.empty(dataset.n_records, dtype=object)
        out[:] = [self.classes[j] for j in np.argmax(jll, axis=1)]
        return out


def train_gnb(dataset: DikwDataset, train_indices: Sequence[int] | None = None) -> GnbModel:
    """Fit class priors, per-class Gaussian moments and smoothed categorical frequencies."""
    if dataset.class_label is None:
        raise DikwError("training needs a class label")
    ds = dataset if train_indices is None else dataset.subset(train_indices)
    if ds.n_records == 0:
        raise DikwError("empty training set")
    y = ds.column(ds.class_label)
    classes = tuple(sorted(set(y.tolist()), key=str))
    if len(classes) < 2:
        raise DikwError("training set holds a single class")

    features = [it for it in ds.items if it.id != ds.class_label]
    numeric_ids = tuple(it.id for it in features if it.is_numeric)
    counts = np.array([np.sum(y == c) for c in classes], dtype=float)
    log_prior = np.log(counts / counts.sum())

    means = np.zeros((len(classes), len(numeric_ids)))
    variances = np.zeros_like(means)
    if numeric_ids:
        X = np.column_stack([ds.column(i) for i in numeric_ids])
        floor = VAR_FLOOR * X.var(axis=0)
        floor[floor == 0] = VAR_FLOOR
        for c, cls in enumerate(classes):
            Xc = X[y == cls]
            means[c] = Xc.mean(axis=0)
            variances[c] = np.maximum(Xc.var(axis=0), floor)

    categorical = {}
    for it in features:
        if it.is_numeric:
            continue
        labels = it.labels or tuple(sorted(set(ds.column(it.id).tolist()), key=str))
        col = ds.column(it.id)
        logp = np.zeros((len(classes), len(labels)))
        for c, cls in enumerate(classes):
            vals = col[y == cls]
            freq = np.array([np.sum(vals == lab) for lab in labels], dtype=float) + 1.0
            logp[c] = np.log(freq / freq.sum())
        categorical[it.id] = (tuple(labels), logp)

    return GnbModel(classes, log_prior, numeric_ids, means, variances, categorical)


def score(model: GnbModel, dataset: DikwDataset) -> tuple[float, dict]:
    y = dataset.column(dataset.class_label)
    if y.size == 0:
        raise DikwError("empty evaluation set")
    pred = model.predict(dataset)
    hit = pred == y
    per_class = {cls: float(hit[y == cls].mean()) for cls in sorted(set(y.tolist()), key=str)}
    return float(hit.mean()), per_class


def evaluate_utility(masked_train: DikwDataset, clean_holdout: DikwDataset,
                     train_fraction: float | None = None, fold_seed: int | None = None) -> UtilityReport:
    """Train on the (noised) training part, score on the clean holdout."""
    if (masked_train.items, masked_train.class_label) != (clean_holdout.items, clean_holdout.class_label):
        raise DikwError("training and holdout schemas differ")
    model = train_gnb(masked_train)
    acc, per_class = score(model, clean_holdout)
    return UtilityReport(acc, per_class, train_fraction, fold_seed)


def coverage(mask: MaskPlan, support: MaskPlan) -> float:
    """Share of the support that the mask selects."""
    size = support.count
    if size == 0:
        return 0.0
    return (mask & support).count / size


def fitness(mask: MaskPlan, dataset: DikwDataset, params: DpParams, weights: FitnessWeights,
            split: Split, seed: int, support: MaskPlan | None = None) -> float:
    """``lambda_u * accuracy(noised train) + lambda_c * coverage``.

    The accuracy term is skipped (not computed) when ``lambda_utility`` is zero.
    ``support`` defaults to every non-label item.
    """
    check_mask(dataset, mask)
    if support is None:
        support = MaskPlan(dataset.item_ids, tuple(i != dataset.class_label for i in dataset.item_ids))
    value = weights.lambda_privacy_coverage * coverage(mask, support)
    if weights.lambda_utility:
        train = dataset.subset(split.train)
        noised = apply_dp(train, mask, params, seed)
        report = evaluate_utility(noised, dataset.subset(split.holdout))
        value += weights.lambda_utility * report.accuracy
    return value


def masked_variance_ratio(clean: DikwDataset, masked: DikwDataset, mask: MaskPlan) -> float:
    """Mean over selected numeric items of ``var(masked) / var(clean)``."""
    if clean.items != masked.items:
        raise DikwError("clean and masked schemas differ")
    check_mask(clean, mask)
    ratios = []
    numeric = [i for i in mask.selected_ids if clean.item(i).is_numeric]
    if not numeric:
        raise DikwError("mask selects no numeric item")
    for item_id in numeric:
        base = float(np.var(clean.column(item_id)))
        if base == 0 or not math.isfinite(base):
            log.warning("item %s has zero clean variance; skipped in variance ratio", item_id)
            continue
        ratios.append(float(np.var(masked.column(item_id))) / base)
    if not ratios:
        raise DikwError("every selected numeric item has zero clean variance")
    return float(np.mean(ratios))
