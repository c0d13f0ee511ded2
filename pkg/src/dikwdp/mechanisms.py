"""Differential-privacy mechanisms and their selective application to DIKW items.

Numeric items are noised with the Laplace mechanism, categorical items with
k-ary randomized response.  Noise is drawn per value.  Each item gets its own
random sub-stream derived from ``(seed, item id)`` and values are drawn in
record order, so the noise an item receives does not depend on which other
items are selected or in which order items are processed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dikw import DikwDataset, DikwError, MaskPlan, PrivacyMode, check_mask, mode_mask
from .rng import stream


class Mechanism(enum.Enum):
    LAPLACE = "laplace"
    RANDOMIZED_RESPONSE = "randomizedResponse"


@dataclass(frozen=True)
class DpParams:
    """Privacy budget and per-item sensitivities.

    ``sensitivity`` may omit items; :func:`resolve_sensitivity` fills the gaps
    with the empirical range of the column.
    """

    epsilon: float
    sensitivity: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        for k, v in self.sensitivity.items():
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"sensitivity for {k!r} must be positive, got {v!r}")


@dataclass(frozen=True)
class NoiseReport:
    item_id: str
    draw_count: int
    empirical_mean: float
    empirical_variance: float


def mechanism_for(dataset: DikwDataset, item_id: str) -> Mechanism:
    return Mechanism.LAPLACE if dataset.item(item_id).is_numeric else Mechanism.RANDOMIZED_RESPONSE


def default_sensitivity(dataset: DikwDataset) -> dict[str, float]:
    """Empirical range ``max - min`` per numeric item (1.0 for constant or empty columns)."""
    out = {}
    for it, col in zip(dataset.items, dataset.columns):
        if it.is_numeric:
            span = float(col.max() - col.min()) if col.size else 0.0
            out[it.id] = span if span > 0 else 1.0
    return out


def resolve_sensitivity(dataset: DikwDataset, params: DpParams) -> dict[str, float]:
    out = default_sensitivity(dataset)
    out.update(params.sensitivity)
    return out


# --------------------------------------------------------------------------- mechanisms

def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite")


def laplace_noise(value, sensitivity: float, epsilon: float, rng: np.random.Generator, size=None):
    """``value + Laplace(0, sensitivity / epsilon)``.

    ``value`` may be a scalar or an array; ``size`` draws that many outputs for
    a scalar value.
    """
    _check_finite("value", value)
    _check_finite("sensitivity", sensitivity)
    _check_finite("epsilon", epsilon)
    if sensitivity <= 0 or epsilon <= 0:
        raise ValueError("sensitivity and epsilon must be positive")
    if size is None:
        size = np.shape(value) or None
    noise = rng.laplace(0.0, sensitivity / epsilon, size=size)
    if size is None:
        return float(value + noise)
    return np.asarray(value, dtype=float) + noise


def keep_probability(epsilon: float, k: int) -> float:
    """``e^eps / (e^eps + k - 1)``, computed without overflow."""
    return 1.0 / (1.0 + (k - 1) * math.exp(-epsilon))


def randomized_response(label, label_set: Sequence, epsilon: float, rng: np.random.Generator, size=None):
    """k-ary randomized response.

    Keeps ``label`` with probability ``keep_probability(epsilon, k)``, otherwise
    returns one of the other ``k - 1`` labels uniformly.  ``label`` may be an
    array of labels (one response per entry) or a scalar with ``size`` draws.
    """
    labels = list(label_set)
    k = len(labels)
    if k < 2:
        raise ValueError("label set needs at least two labels")
    if not (epsilon >= 0 and math.isfinite(epsilon)):
        raise ValueError("epsilon must be non-negative and finite")
    lookup = {lab: i for i, lab in enumerate(labels)}
    scalar = np.ndim(label) == 0 and size is None
    flat = [label] * size if np.ndim(label) == 0 and size is not None else list(np.ravel(label))
    try:
        idx = np.array([lookup[v] for v in flat], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} is not in the label set") from None

    keep = rng.random(idx.size) < keep_probability(epsilon, k)
    # shift by 1..k-1 so the replacement is uniform over the other labels
    shift = rng.integers(1, k, size=idx.size)
    out_idx = np.where(keep, idx, (idx + shift) % k)
    out = np.empty(idx.size, dtype=object)
    out[:] = [labels[i] for i in out_idx]
    if scalar:
        return out[0]
    return out


# --------------------------------------------------------------------------- selective application

def noise_item(dataset: DikwDataset, item_id: str, params: DpParams, seed: int,
               sensitivity: Mapping[str, float] | None = None) -> np.ndarray:
    """Noised copy of one column, drawn from the item's own sub-stream."""
    item = dataset.item(item_id)
    col = dataset.column(item_id)
    rng = stream(seed, "item", item_id)
    if item.is_numeric:
        if sensitivity is None:
            sensitivity = resolve_sensitivity(dataset, params)
        sens = sensitivity.get(item_id)
        if sens is None:
            raise DikwError(f"no sensitivity for numeric item {item_id!r}")
        if col.size == 0:
            return col.copy()
        return laplace_noise(col, sens, params.epsilon, rng)
    if col.size == 0:
        return col.copy()
    return randomized_response(col, item.labels, params.epsilon, rng)


def apply_dp(dataset: DikwDataset, mask: MaskPlan, params: DpParams, seed: int) -> DikwDataset:
    """Return a copy of ``dataset`` with every selected item independently noised."""
    check_mask(dataset, mask)
    sens = resolve_sensitivity(dataset, params)
    replaced = {i: noise_item(dataset, i, params, seed, sens) for i in mask.selected_ids}
    return dataset.with_columns(replaced)


def noise_reports(clean: DikwDataset, noised: DikwDataset, mask: MaskPlan) -> list[NoiseReport]:
    """Per selected item: moments of the added noise (numeric) or of the flip indicator (categorical)."""
    reports = []
    for item_id in mask.selected_ids:
        a, b = clean.column(item_id), noised.column(item_id)
        if a.size == 0:
            continue
        if clean.item(item_id).is_numeric:
            diff = b - a
        else:
            diff = (a != b).astype(float)
        reports.append(NoiseReport(item_id, int(a.size), float(diff.mean()), float(diff.var())))
    return reports


def budget_summary(params: DpParams, mask: MaskPlan) -> dict:
    return {
        "epsilon_per_item": params.epsilon,
        "epsilon_total": params.epsilon,
        "accounting": "parallel composition over disjoint columns; each selected item spends epsilon once",
        "noised_items": list(mask.selected_ids),
    }


MODE_PREFERENCE = (PrivacyMode.IDP, PrivacyMode.KDP, PrivacyMode.DDP,
                   PrivacyMode.DIDP, PrivacyMode.IKDP, PrivacyMode.DIKDP)


def mode_order_suggestion(dataset: DikwDataset) -> list[PrivacyMode]:
    """Cheapest-first mode preference, restricted to modes that mask something."""
    order = [m for m in MODE_PREFERENCE if mode_mask(dataset, m).count > 0]
    if dataset.purpose_edges:
        order.append(PrivacyMode.PDP)
    return order


# --------------------------------------------------------------------------- empirical verification

SingleValueMechanism = Callable[[object, np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class VerifyResult:
    """Outcome of an empirical epsilon estimate.

    ``empirical_epsilon`` is ``None`` when the histograms share no bin.
    ``slack`` is the sampling slack at the bin attaining the maximum.
    """

    empirical_epsilon: float | None
    slack: float
    draw_count: int
    bins_compared: int

    @property
    def inconclusive(self) -> bool:
        return self.empirical_epsilon is None

    def passes(self, epsilon: float) -> bool | None:
        if self.inconclusive:
            return None
        return self.empirical_epsilon <= epsilon + self.slack


def verifier_slack(n: int, p_min: float) -> float:
    return 3.0 * math.sqrt(2.0 / (n * p_min))


def laplace_mechanism(sensitivity: float, epsilon: float) -> SingleValueMechanism:
    return lambda v, rng, n: laplace_noise(v, sensitivity, epsilon, rng, size=n)


def rr_mechanism(label_set: Sequence, epsilon: float) -> SingleValueMechanism:
    return lambda v, rng, n: randomized_response(v, label_set, epsilon, rng, size=n)


def _histograms(out_a: np.ndarray, out_b: np.ndarray, bin_count: int):
    if out_a.dtype.kind in "fiu" and out_b.dtype.kind in "fiu":
        pooled = np.concatenate([out_a, out_b])
        # equal-mass bins on the pooled sample keep every bin well populated
        edges = np.unique(np.quantile(pooled, np.linspace(0, 1, bin_count + 1)[1:-1]))
        ca = np.bincount(np.searchsorted(edges, out_a, side="right"), minlength=edges.size + 1)
        cb = np.bincount(np.searchsorted(edges, out_b, side="right"), minlength=edges.size + 1)
        return ca, cb
    labels = sorted(set(out_a.tolist()) | set(out_b.tolist()), key=str)
    pos = {lab: i for i, lab in enumerate(labels)}
    ca = np.bincount([pos[v] for v in out_a.tolist()], minlength=len(labels))
    cb = np.bincount([pos[v] for v in out_b.tolist()], minlength=len(labels))
    return ca, cb


def verify_epsilon(mechanism: SingleValueMechanism, value_a, value_b, epsilon: float,
                   draw_count: int = 100_000, bin_count: int = 20, seed: int = 0) -> VerifyResult:
    """Estimate the privacy loss of ``mechanism`` between two neighbouring inputs.

    Runs the mechanism ``draw_count`` times on each input, histograms both
    output samples on a shared binning and returns the largest absolute log
    ratio over bins populated on both sides.  ``epsilon`` is the claimed
    budget; it does not influence the estimate and is only checked for sign.
    """
    if draw_count < 10_000:
        raise ValueError("draw_count must be at least 10^4")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    out_a = np.asarray(mechanism(value_a, stream(seed, "verify", "a"), draw_count))
    out_b = np.asarray(mechanism(value_b, stream(seed, "verify", "b"), draw_count))
    ca, cb = _histograms(out_a, out_b, bin_count)
    both = (ca > 0) & (cb > 0)
    if not both.any():
        return VerifyResult(None, math.inf, draw_count, 0)
    pa = ca[both] / draw_count
    pb = cb[both] / draw_count
    losses = np.abs(np.log(pa / pb))
    j = int(np.argmax(losses))
    slack = verifier_slack(draw_count, float(min(pa[j], pb[j])))
    return VerifyResult(float(losses[j]), slack, draw_count, int(both.sum()))
