import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dikwdp.dikw import Category, DikwDataset, DikwError, DikwItem, MaskPlan, Modal, PrivacyMode, ValueKind
from dikwdp.swarm import (OptimizationTrace, Particle, STWeights, SwarmConfig, TraceRecord, binary_pso_step,
                          best_indices, continuous_pso_step, converged, decide_mode, optimize_mask,
                          plain_bests, spatiotemporal_bests)

from conftest import make_dataset


class FixedRng:
    """Stands in for a Generator: every ``random`` call returns the next queued array."""

    def __init__(self, *draws):
        self.draws = [np.asarray(d, dtype=float) for d in draws]

    def random(self, shape):
        return np.broadcast_to(self.draws.pop(0), shape)


class TestContinuous:
    def test_fixed_point(self):
        cfg = SwarmConfig()
        x, v = continuous_pso_step([1.0, -2.0], [0.0, 0.0], [1.0, -2.0], [1.0, -2.0], cfg, np.random.default_rng(0))
        assert np.array_equal(x, [1.0, -2.0]) and np.array_equal(v, [0.0, 0.0])

    def test_pure_inertia(self):
        cfg = SwarmConfig(c1=0.0, c2=0.0, inertia=0.5)
        x, v = continuous_pso_step([1.0], [2.0], [9.0], [9.0], cfg, np.random.default_rng(0))
        assert x[0] == 2.0 and v[0] == 1.0

    def test_hand_substitution(self):
        cfg = SwarmConfig(c1=1.0, c2=2.0)
        x, v = continuous_pso_step([0.0], [1.0], [2.0], [4.0], cfg, FixedRng([0.5], [0.25]))
        # v' = 1 + 1*0.5*2 + 2*0.25*4 = 4
        assert v[0] == 4.0 and x[0] == 4.0

    def test_sphere(self):
        cfg = SwarmConfig(c1=1.49618, c2=1.49618, inertia=0.7298)
        rng = np.random.default_rng(0)
        f = lambda p: float(np.sum(p * p))
        # brute-force oracle for the minimiser on a grid containing it
        grid = np.linspace(-5, 5, 101)
        oracle = min(((a, b) for a in grid for b in grid), key=lambda p: f(np.array(p)))
        X = rng.uniform(-5, 5, (50, 2))
        V = np.zeros_like(X)
        PB = X.copy()
        PF = np.array([f(x) for x in X])
        for _ in range(200):
            g = PB[np.argmin(PF)]
            for i in range(50):
                X[i], V[i] = continuous_pso_step(X[i], V[i], PB[i], g, cfg, rng)
                if f(X[i]) < PF[i]:
                    PB[i], PF[i] = X[i].copy(), f(X[i])
        assert np.linalg.norm(PB[np.argmin(PF)] - np.array(oracle)) < 1e-3


class TestBinaryStep:
    def test_hand_substitution(self):
        cfg = SwarmConfig(c1=1.0, c2=1.0)
        p = Particle.initial(np.array([1, -1, 1]))
        out = binary_pso_step(p, np.array([1, 1, -1]), np.array([1, 1, 1]), cfg, FixedRng([0.5], [0.5]))
        # v'' = 1 + 0.5*(lb-x) + 0.5*(gb-x) = [1, 3, 0]; v' = [1, 1, keep]; signVelocity = v'*x
        assert out.real_velocity.tolist() == [1.0, 3.0, 0.0]
        assert out.sign_velocity.tolist() == [1, -1, 1]
        assert out.position.tolist() == [1, 1, 1]

    def test_no_flip_when_everything_agrees(self):
        x = np.array([1, -1, -1, 1], dtype=np.int8)
        p = Particle(x, x.copy(), np.zeros(4), x.copy())
        out = binary_pso_step(p, x, x, SwarmConfig(), np.random.default_rng(3))
        assert np.array_equal(out.position, x)

    def test_deterministic(self):
        p = Particle.initial(np.array([1, -1, 1, -1]))
        lb, gb = np.array([-1, -1, 1, 1]), np.array([1, 1, -1, -1])
        a = binary_pso_step(p, lb, gb, SwarmConfig(), np.random.default_rng(5))
        b = binary_pso_step(p, lb, gb, SwarmConfig(), np.random.default_rng(5))
        assert np.array_equal(a.position, b.position)

    def test_rejects_non_signs(self):
        p = Particle.initial(np.array([1, 1]))
        with pytest.raises(ValueError):
            binary_pso_step(p, np.array([0, 1]), np.array([1, 1]), SwarmConfig(), np.random.default_rng(0))
        with pytest.raises(ValueError):
            binary_pso_step(p, np.array([1]), np.array([1, 1]), SwarmConfig(), np.random.default_rng(0))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(*[st.lists(st.sampled_from([-1, 1]), min_size=n,
                                                                     max_size=n)] * 4)),
           st.integers(0, 2**32 - 1), st.sampled_from(["sign", "real"]))
    def test_sign_closure(self, vecs, seed, momentum):
        x, sv, lb, gb = (np.array(v, dtype=np.int8) for v in vecs)
        p = Particle(x, sv, np.zeros(x.size), x.copy())
        out = binary_pso_step(p, lb, gb, SwarmConfig(momentum=momentum), np.random.default_rng(seed))
        assert set(out.position.tolist()) <= {-1, 1}
        assert set(out.sign_velocity.tolist()) <= {-1, 1}
        assert np.array_equal(out.position, x * out.sign_velocity)


def test_best_indices_ring_and_ties():
    local, g = best_indices(np.array([1.0, 3.0, 3.0, 0.0, 2.0]), 1)
    assert g == 1
    assert local.tolist() == [1, 1, 1, 2, 4]
    local, g = best_indices(np.array([5.0, 5.0]), 3)
    assert local.tolist() == [0, 0] and g == 0


class TestOptimize:
    def test_single_coordinate(self):
        ds = make_dataset([Category.WHO, Category.WHAT])
        res = optimize_mask(ds, "DDP", lambda m: float(m.count), SwarmConfig(particle_count=4, max_iterations=5))
        assert res.best_mask.selected_ids == ("c0",)
        assert res.support == ("c0",)

    def test_matches_exhaustive_oracle(self):
        ds = make_dataset([Category.WHO] * 8)
        w = np.array([0.9, -0.4, 0.3, 0.05, -0.2, 0.7, -0.01, 0.45])

        def fit(mask):
            return float(w @ mask.as_array()[:8])

        oracle = max(float(w @ np.array(b)) for b in itertools.product([0, 1], repeat=8))
        hits = 0
        for seed in range(5):
            res = optimize_mask(ds, "DDP", fit, SwarmConfig(seed=seed))
            hits += math.isclose(res.best_fitness, oracle)
            assert res.trace.is_monotone
        assert hits >= 4

    def test_frozen_outside_support(self):
        ds = make_dataset([Category.WHO, Category.WHAT, Category.HOW, Category.WHEN])
        res = optimize_mask(ds, "DDP", lambda m: float(m.count), SwarmConfig(max_iterations=10))
        assert res.support == ("c0", "c3")
        for mask in res.evaluated:
            assert set(mask.selected_ids) <= {"c0", "c3"}
        assert res.best_mask.selected_ids == ("c0", "c3")

    def test_empty_support(self):
        with pytest.raises(DikwError):
            optimize_mask(make_dataset([Category.WHAT]), "KDP", lambda m: 0.0, SwarmConfig())

    def test_seed_determinism(self):
        ds = make_dataset([Category.WHO] * 6)
        fit = lambda m: float(np.sin(np.arange(7) + 1) @ m.as_array())
        a = optimize_mask(ds, "DDP", fit, SwarmConfig(seed=3))
        b = optimize_mask(ds, "DDP", fit, SwarmConfig(seed=3))
        assert a.best_mask == b.best_mask and a.trace.to_dicts() == b.trace.to_dicts()

    def test_early_stop_on_variance_blowup(self):
        ds = make_dataset([Category.WHO] * 6)
        # variance explodes whenever fewer items are retained
        res = optimize_mask(ds, "DDP", lambda m: -float(m.count), SwarmConfig(max_iterations=40),
                            variance_fn=lambda m: 10.0 ** (6 - m.count))
        assert res.converged_early
        assert len(res.trace) < 41


def st_dataset():
    items = (
        DikwItem("near_new", "near_new", Modal.DATA, Category.WHO, spatial_coord=(0.0, 0.0), timestamp=100),
        DikwItem("far_old", "far_old", Modal.DATA, Category.WHO, spatial_coord=(10.0, 0.0), timestamp=0),
        DikwItem("y", "y", Modal.KNOWLEDGE, Category.WHAT, ValueKind.CATEGORICAL, ("a", "b")),
    )
    cols = (np.zeros(4), np.ones(4), np.array(["a", "b", "a", "b"], dtype=object))
    return DikwDataset(items, cols, (), "y")


def swarm_of(*bests):
    return [Particle(np.array(p, dtype=np.int8), np.ones(2, np.int8), np.zeros(2), np.array(p, dtype=np.int8), f)
            for p, f in bests]


class TestSpatiotemporal:
    def test_zero_weights_reduce_to_plain(self):
        ds = st_dataset()
        swarm = swarm_of(([1, -1], 0.5), ([-1, 1], 0.9), ([1, 1], 0.7), ([-1, -1], 0.1))
        cfg = SwarmConfig(st_weights=STWeights(0.0, 0.0))
        for i in range(4):
            a = spatiotemporal_bests(i, swarm, ds, ("near_new", "far_old"), cfg)
            b = plain_bests(i, swarm, cfg.neighborhood_radius)
            assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_fresher_candidate_wins(self):
        ds = st_dataset()
        swarm = swarm_of(([-1, 1], 0.8), ([1, -1], 0.8))
        cfg = SwarmConfig(st_weights=STWeights(0.0, 1.0))
        _, g = spatiotemporal_bests(0, swarm, ds, ("near_new", "far_old"), cfg)
        assert g.tolist() == [1, -1]
        _, g_plain = plain_bests(0, swarm, 1)
        assert g_plain.tolist() == [-1, 1]

    def test_single_particle(self):
        ds = st_dataset()
        swarm = swarm_of(([1, -1], 0.3))
        cfg = SwarmConfig(st_weights=STWeights(1.0, 1.0))
        lb, gb = spatiotemporal_bests(0, swarm, ds, ("near_new", "far_old"), cfg)
        assert lb.tolist() == gb.tolist() == [1, -1]

    def test_missing_metadata(self):
        ds = make_dataset([Category.WHO, Category.WHO])
        swarm = swarm_of(([1, -1], 0.3))
        with pytest.raises(DikwError, match="timestamp"):
            spatiotemporal_bests(0, swarm, ds, ("c0", "c1"), SwarmConfig(st_weights=STWeights(0.0, 1.0)))
        with pytest.raises(DikwError, match="spatial"):
            optimize_mask(ds, "DDP", lambda m: 0.0, SwarmConfig(st_weights=STWeights(1.0, 0.0)))


def trace_of(*pairs):
    return OptimizationTrace([TraceRecord(k, 0.0, frac, var, 0) for k, (frac, var) in enumerate(pairs)])


@pytest.mark.parametrize("pairs, expected", [
    (((0.6, 1.0), (0.4, 2.0)), True),    # shrank and variance doubled
    (((0.6, 1.0), (0.6, 2.0)), False),   # did not shrink
    (((0.6, 1.0), (0.4, 1.2)), False),   # variance grew less than the factor
])
def test_converged(pairs, expected):
    assert converged(trace_of(*pairs), SwarmConfig(variance_blowup_factor=1.5)) is expected


def chain_dataset(info_from_data, know_from_info, n=200, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=n)
    i = 2 * d if info_from_data else rng.normal(size=n)
    k = i + 0.01 * rng.normal(size=n) if know_from_info else rng.normal(size=n)
    items = (DikwItem("d", "d", Modal.DATA, Category.WHO), DikwItem("i", "i", Modal.INFORMATION, Category.WHAT),
             DikwItem("k", "k", Modal.KNOWLEDGE, Category.HOW))
    return DikwDataset(items, (d, i, k))


class TestDecideMode:
    def test_independent(self):
        ds = chain_dataset(False, False)
        assert decide_mode(ds, MaskPlan.from_ids(ds, ["d"])) is PrivacyMode.DDP

    def test_information_from_data(self):
        ds = chain_dataset(True, False)
        mode = decide_mode(ds, MaskPlan.from_ids(ds, ["d"]))
        assert mode in (PrivacyMode.DIDP, PrivacyMode.DIKDP)
        assert mode is PrivacyMode.DIDP

    def test_full_chain(self):
        ds = chain_dataset(True, True)
        assert decide_mode(ds, MaskPlan.from_ids(ds, ["d"])) is PrivacyMode.DIKDP

    def test_information_only(self):
        ds = chain_dataset(False, False)
        assert decide_mode(ds, MaskPlan.from_ids(ds, ["i"])) is PrivacyMode.IDP

    def test_errors(self):
        ds = chain_dataset(True, True, n=2)
        with pytest.raises(DikwError, match="3 records"):
            decide_mode(ds, MaskPlan.from_ids(ds, ["d"]))
        ds = chain_dataset(True, True)
        with pytest.raises(DikwError):
            decide_mode(ds, MaskPlan.empty(ds))
        with pytest.raises(ValueError):
            decide_mode(ds, MaskPlan.from_ids(ds, ["d"]), tau=1.5)
