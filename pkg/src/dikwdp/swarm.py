"""Sign-valued binary particle swarm search over noise masks.

Positions and sign velocities live in {-1, +1}; ``+1`` means the item is
noised.  Per coordinate one step computes

    v''    = v_prev + c1*r1*(localbest - x_prev) + c2*r2*(globalbest - x_prev)
    v'     = sign(v'')                  (v'' == 0 keeps the current state)
    v      = v' * x_prev
    x_new  = x_prev * v

so ``v = -1`` flips the coordinate and ``v = +1`` keeps it.  The momentum
term ``v_prev`` is the previous sign velocity (``momentum="sign"``, default)
or the previous real ``v''`` (``momentum="real"``).  Carrying the real value
lets the swarm lock onto its first consensus; the sign-valued term keeps
unselected coordinates cycling, which is where the search gets its
exploration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dikw import DikwDataset, DikwError, MaskPlan, Modal, PrivacyMode, mode_mask, parse_mode
from .rng import stream


@dataclass(frozen=True)
class STWeights:
    alpha_spatial: float = 0.0
    alpha_temporal: float = 0.0

    def __post_init__(self):
        if self.alpha_spatial < 0 or self.alpha_temporal < 0:
            raise ValueError("spatial-temporal weights must be non-negative")


@dataclass(frozen=True)
class SwarmConfig:
    particle_count: int = 20
    c1: float = 1.5
    c2: float = 1.5
    max_iterations: int = 40
    neighborhood_radius: int = 1
    seed: int = 0
    variance_blowup_factor: float = 1.5
    st_weights: STWeights | None = None
    momentum: str = "sign"
    inertia: float = 1.0

    def __post_init__(self):
        if self.momentum not in ("sign", "real"):
            raise ValueError("momentum must be 'sign' or 'real'")
        if self.particle_count < 2:
            raise ValueError("particle_count must be at least 2")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("acceleration coefficients must be non-negative")
        if self.max_iterations < 0 or self.neighborhood_radius < 0:
            raise ValueError("max_iterations and neighborhood_radius must be non-negative")
        if not self.variance_blowup_factor > 1:
            raise ValueError("variance_blowup_factor must exceed 1")


@dataclass(frozen=True, eq=False)
class Particle:
    position: np.ndarray
    sign_velocity: np.ndarray
    real_velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float = -math.inf

    @classmethod
    def initial(cls, position: np.ndarray) -> "Particle":
        pos = np.asarray(position, dtype=np.int8)
        return cls(pos, np.ones_like(pos), np.zeros(pos.shape), pos.copy())


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    global_best_fitness: float
    retained_fraction: float
    masked_data_variance: float
    evaluations: int


@dataclass
class OptimizationTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def global_best_fitness(self) -> list[float]:
        return [r.global_best_fitness for r in self.records]

    def is_monotone(self) -> bool:
        f = self.global_best_fitness
        return all(b >= a for a, b in zip(f, f[1:]))

    def to_dicts(self) -> list[dict]:
        return [r.__dict__.copy() for r in self.records]


def _check_signs(name: str, v: np.ndarray):
    if not np.all((v == 1) | (v == -1)):
        raise ValueError(f"{name} entries must be -1 or +1")


# --------------------------------------------------------------------------- update rules

def continuous_pso_step(position, velocity, personal_best, global_best,
                        config: SwarmConfig, rng: np.random.Generator):
    """Classic real-valued PSO update. Returns ``(position, velocity)``.

    ``config.inertia`` scales the carried velocity; the default 1.0 is the
    plain additive recurrence.
    """
    x, v, pb, gb = (np.asarray(a, dtype=float) for a in (position, velocity, personal_best, global_best))
    if not (x.shape == v.shape == pb.shape == gb.shape):
        raise ValueError("position, velocity and bests must have the same length")
    r1 = rng.random(x.shape)
    r2 = rng.random(x.shape)
    v_new = config.inertia * v + config.c1 * r1 * (pb - x) + config.c2 * r2 * (gb - x)
    return x + v_new, v_new


def _sign_update(x, sign_v, real_v, lb, gb, config: SwarmConfig, rng: np.random.Generator):
    """Shared kernel: works on one particle (1-D) or a whole swarm (2-D, one row per particle)."""
    r1 = rng.random(x.shape)
    r2 = rng.random(x.shape)
    prev = real_v if config.momentum == "real" else sign_v.astype(float)
    xf = x.astype(float)
    v2 = prev + config.c1 * r1 * (lb - xf) + config.c2 * r2 * (gb - xf)
    v1 = np.where(v2 > 0, 1, np.where(v2 < 0, -1, x)).astype(np.int8)
    new_sign_v = (v1 * x).astype(np.int8)
    return (x * new_sign_v).astype(np.int8), new_sign_v, v2


def binary_pso_step(particle: Particle, local_best, global_best,
                    config: SwarmConfig, rng: np.random.Generator) -> Particle:
    """One sign-valued update; personal-best bookkeeping is left to the caller."""
    x = particle.position
    lb = np.asarray(local_best)
    gb = np.asarray(global_best)
    if not (x.shape == lb.shape == gb.shape == particle.real_velocity.shape == particle.sign_velocity.shape):
        raise ValueError("particle and best vectors must have the same length")
    _check_signs("position", x)
    _check_signs("sign velocity", particle.sign_velocity)
    _check_signs("local best", lb)
    _check_signs("global best", gb)
    pos, sv, rv = _sign_update(x, particle.sign_velocity, particle.real_velocity, lb, gb, config, rng)
    return replace(particle, position=pos, sign_velocity=sv, real_velocity=rv)


# --------------------------------------------------------------------------- best selection

def ring_neighbours(n: int, radius: int) -> np.ndarray:
    """Row i lists particle i's ring neighbourhood (itself included) in ascending index order."""
    if 2 * radius + 1 >= n:
        return np.tile(np.arange(n), (n, 1))
    offsets = np.arange(-radius, radius + 1)
    return np.sort((np.arange(n)[:, None] + offsets[None, :]) % n, axis=1)


def best_indices(scores: np.ndarray, radius: int) -> tuple[np.ndarray, int]:
    """Per-particle local-best index and the global-best index.

    Ties go to the lowest particle index, so the result is a deterministic
    fold in particle order.
    """
    scores = np.asarray(scores, dtype=float)
    nbr = ring_neighbours(scores.size, radius)
    local = nbr[np.arange(scores.size), np.argmax(scores[nbr], axis=1)]
    return local, int(np.argmax(scores))


def plain_bests(index: int, swarm: Sequence[Particle], radius: int):
    """``(localbest, globalbest)`` from personal bests: ring neighbourhood and whole swarm."""
    local, g = best_indices(np.array([p.best_fitness for p in swarm]), radius)
    return swarm[local[index]].best_position, swarm[g].best_position


@dataclass(frozen=True)
class ItemMetadata:
    """Normalised spatial distance and age per support coordinate (NaN when absent).

    Spatial distance is measured from the centroid of the items' coordinates
    and scaled to [0, 1]; age is ``(newest - t) / (newest - oldest)``.
    """

    spatial: np.ndarray
    age: np.ndarray

    @classmethod
    def from_items(cls, dataset: DikwDataset, support_ids: Sequence[str]) -> "ItemMetadata":
        items = [dataset.item(i) for i in support_ids]
        spatial = np.full(len(items), np.nan)
        coords = [(k, it.spatial_coord) for k, it in enumerate(items) if it.spatial_coord is not None]
        if coords:
            pts = np.array([c for _, c in coords], dtype=float)
            dist = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
            scale = dist.max()
            dist = dist / scale if scale > 0 else np.zeros_like(dist)
            spatial[[k for k, _ in coords]] = dist
        age = np.full(len(items), np.nan)
        stamps = [(k, it.timestamp) for k, it in enumerate(items) if it.timestamp is not None]
        if stamps:
            ts = np.array([t for _, t in stamps], dtype=float)
            span = ts.max() - ts.min()
            age[[k for k, _ in stamps]] = (ts.max() - ts) / span if span > 0 else 0.0
        return cls(spatial, age)

    def check(self, weights: STWeights):
        if weights.alpha_spatial > 0 and np.all(np.isnan(self.spatial)):
            raise DikwError("spatial weighting requested but no item carries a spatial coordinate")
        if weights.alpha_temporal > 0 and np.all(np.isnan(self.age)):
            raise DikwError("temporal weighting requested but no item carries a timestamp")


def _mean_over_selected(values: np.ndarray, positions: np.ndarray) -> np.ndarray:
    sel = (positions == 1) & ~np.isnan(values)
    total = np.where(sel, np.nan_to_num(values), 0.0).sum(axis=-1)
    count = sel.sum(axis=-1)
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def st_weight(positions: np.ndarray, meta: ItemMetadata, weights: STWeights) -> np.ndarray:
    """``1 / (1 + a_s * spatial + a_t * age)``, metadata averaged over each mask's selected items."""
    penalty = np.zeros(np.shape(positions)[:-1])
    if weights.alpha_spatial:
        penalty = penalty + weights.alpha_spatial * _mean_over_selected(meta.spatial, positions)
    if weights.alpha_temporal:
        penalty = penalty + weights.alpha_temporal * _mean_over_selected(meta.age, positions)
    return 1.0 / (1.0 + penalty)


def spatiotemporal_bests(index: int, swarm: Sequence[Particle], dataset: DikwDataset,
                         support_ids: Sequence[str], config: SwarmConfig,
                         meta: ItemMetadata | None = None):
    """Local and global bests ranked by ``fitness * weight`` instead of raw fitness.

    With both weights zero the weight is exactly 1 and this reduces to
    :func:`plain_bests`.
    """
    weights = config.st_weights
    if weights is None:
        raise ValueError("config has no spatial-temporal weights")
    if meta is None:
        meta = ItemMetadata.from_items(dataset, support_ids)
    meta.check(weights)
    fit = np.array([p.best_fitness for p in swarm])
    pos = np.stack([p.best_position for p in swarm])
    local, g = best_indices(fit * st_weight(pos, meta, weights), config.neighborhood_radius)
    return swarm[local[index]].best_position, swarm[g].best_position


# --------------------------------------------------------------------------- optimisation

def converged(trace: OptimizationTrace, config: SwarmConfig) -> bool:
    """Retained set shrank while the masked-data variance jumped by the blow-up factor."""
    if len(trace) < 2:
        return False
    prev, cur = trace.records[-2], trace.records[-1]
    if not (math.isfinite(prev.masked_data_variance) and math.isfinite(cur.masked_data_variance)):
        return False
    shrank = cur.retained_fraction < prev.retained_fraction
    return shrank and cur.masked_data_variance > config.variance_blowup_factor * prev.masked_data_variance


@dataclass
class OptimizationResult:
    best_mask: MaskPlan
    best_fitness: float
    trace: OptimizationTrace
    support: tuple[str, ...]
    converged_early: bool = False
    evaluated: dict = field(default_factory=dict, repr=False)
    particles: list[Particle] = field(default_factory=list, repr=False)


def _to_mask(dataset: DikwDataset, support_idx: np.ndarray, position: np.ndarray) -> MaskPlan:
    selected = [False] * len(dataset.items)
    for j, x in zip(support_idx, position):
        selected[j] = bool(x == 1)
    return MaskPlan(dataset.item_ids, tuple(selected))


def optimize_mask(dataset: DikwDataset, mode: PrivacyMode | str,
                  fitness_fn: Callable[[MaskPlan], float], config: SwarmConfig,
                  variance_fn: Callable[[MaskPlan], float] | None = None) -> OptimizationResult:
    """Search the masks inside ``mode``'s support for the highest fitness.

    Items outside the support stay unselected.  ``fitness_fn`` must be
    deterministic; values are cached per mask and ``result.evaluated`` maps
    every visited mask to its fitness.  ``variance_fn`` feeds the
    masked-data-variance column of the trace and, through it, early stopping.
    """
    mode = parse_mode(mode)
    support_idx = np.flatnonzero(mode_mask(dataset, mode).as_array())
    support_ids = tuple(dataset.item_ids[j] for j in support_idx)
    n = support_idx.size
    if n == 0:
        raise DikwError(f"mode {mode.value} selects no items on this dataset")

    rng = stream(config.seed, "swarm")
    cache: dict[bytes, float] = {}
    masks: dict[bytes, MaskPlan] = {}
    variances: dict[bytes, float] = {}

    def evaluate(position: np.ndarray) -> float:
        key = position.tobytes()
        if key not in cache:
            masks[key] = _to_mask(dataset, support_idx, position)
            cache[key] = float(fitness_fn(masks[key]))
        return cache[key]

    def variance_of(position: np.ndarray) -> float:
        if variance_fn is None:
            return math.nan
        key = position.tobytes()
        if key not in variances:
            variances[key] = float(variance_fn(_to_mask(dataset, support_idx, position)))
        return variances[key]

    P = config.particle_count
    X = np.where(rng.random((P, n)) < 0.5, -1, 1).astype(np.int8)
    SV = np.ones_like(X)
    RV = np.zeros(X.shape)
    PB = X.copy()
    PF = np.array([evaluate(x) for x in X])

    weights = config.st_weights
    meta = None
    if weights is not None:
        meta = ItemMetadata.from_items(dataset, support_ids)
        meta.check(weights)

    trace = OptimizationTrace()

    def record(iteration: int):
        g = int(np.argmax(PF))
        trace.records.append(TraceRecord(
            iteration=iteration,
            global_best_fitness=float(PF[g]),
            retained_fraction=float(np.mean(PB[g] == 1)),
            masked_data_variance=variance_of(PB[g]),
            evaluations=len(cache),
        ))

    record(0)
    early = False
    for t in range(1, config.max_iterations + 1):
        scores = PF if weights is None else PF * st_weight(PB, meta, weights)
        local, g = best_indices(scores, config.neighborhood_radius)
        X, SV, RV = _sign_update(X, SV, RV, PB[local], PB[g][None, :], config, rng)
        F = np.array([evaluate(x) for x in X])
        improved = F > PF
        PB[improved] = X[improved]
        PF[improved] = F[improved]
        record(t)
        if converged(trace, config):
            early = True
            break

    g = int(np.argmax(PF))
    particles = [Particle(X[i].copy(), SV[i].copy(), RV[i].copy(), PB[i].copy(), float(PF[i]))
                 for i in range(P)]
    return OptimizationResult(
        best_mask=_to_mask(dataset, support_idx, PB[g]),
        best_fitness=float(PF[g]),
        trace=trace,
        support=support_ids,
        converged_early=early,
        evaluated={masks[k]: v for k, v in cache.items()},
        particles=particles,
    )



# --------------------------------------------------------------------------- mode decision

def _encoded(dataset: DikwDataset, item_id: str) -> np.ndarray:
    col = dataset.column(item_id)
    if dataset.item(item_id).is_numeric:
        return col.astype(float)
    labels, inverse, counts = np.unique(col.astype(str), return_inverse=True, return_counts=True)
    # rank 0 = most frequent label; ties broken by label order
    order = np.lexsort((labels, -counts))
    rank = np.empty(len(labels), dtype=float)
    rank[order] = np.arange(len(labels))
    return rank[inverse]


def _abs_pearson(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    r = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return min(abs(r), 1.0)


def association(dataset: DikwDataset, from_ids: Sequence[str], to_ids: Sequence[str]) -> float:
    """Mean absolute Pearson correlation over all (from, to) item pairs; 0 if either side is empty."""
    if not from_ids or not to_ids:
        return 0.0
    enc = {i: _encoded(dataset, i) for i in set(from_ids) | set(to_ids)}
    return float(np.mean([_abs_pearson(enc[a], enc[b]) for a in from_ids for b in to_ids]))


_MODE_MODALS = (
    (PrivacyMode.DDP, {Modal.DATA}),
    (PrivacyMode.IDP, {Modal.INFORMATION}),
    (PrivacyMode.KDP, {Modal.KNOWLEDGE}),
    (PrivacyMode.DIDP, {Modal.DATA, Modal.INFORMATION}),
    (PrivacyMode.IKDP, {Modal.INFORMATION, Modal.KNOWLEDGE}),
    (PrivacyMode.DIKDP, {Modal.DATA, Modal.INFORMATION, Modal.KNOWLEDGE}),
)


def decide_mode(dataset: DikwDataset, retained_mask: MaskPlan, tau: float = 0.5) -> PrivacyMode:
    """Pick the privacy mode implied by the retained items and their upward associations.

    Starting from Data, each modal that is in play pulls in the next modal up
    when the association between them reaches ``tau``.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if dataset.n_records < 3:
        raise DikwError("decide_mode needs at least 3 records")
    retained = [i for i in retained_mask.selected_ids if i != dataset.class_label]
    if not retained:
        raise DikwError("retained mask selects no items")

    def of_modal(ids, modal):
        return [i for i in ids if dataset.item(i).modal is modal]

    eligible = [it.id for it in dataset.items if it.id != dataset.class_label]
    included = {dataset.item(i).modal for i in retained} & {Modal.DATA, Modal.INFORMATION, Modal.KNOWLEDGE}
    if not included:
        raise DikwError("retained mask holds no Data, Information or Knowledge items")

    if Modal.DATA in included:
        if association(dataset, of_modal(retained, Modal.DATA),
                       of_modal(eligible, Modal.INFORMATION)) >= tau:
            included.add(Modal.INFORMATION)
    if Modal.INFORMATION in included:
        source = of_modal(retained, Modal.INFORMATION) or of_modal(eligible, Modal.INFORMATION)
        if association(dataset, source, of_modal(eligible, Modal.KNOWLEDGE)) >= tau:
            included.add(Modal.KNOWLEDGE)

    for mode, modals in _MODE_MODALS:
        if included <= modals:
            return mode
    raise AssertionError("unreachable: DIKDP covers every modal")
