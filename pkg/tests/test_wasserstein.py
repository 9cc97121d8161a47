import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmv.paths import CadlagPath, uniform_distance
from rmv.wasserstein import (
    WassersteinError,
    sinkhorn,
    w2_point_clouds,
    w2_paths,
    w2_upper_sup,
)


def brute_force(cost):
    k = cost.shape[0]
    return math.sqrt(min(sum(cost[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k))) / k)


def random_path(rng, n=5, d=2):
    times = np.concatenate([[0.0], np.sort(rng.uniform(0, 0.95, n - 1))])
    return CadlagPath(times, rng.normal(size=(n, d)), 1.0)


class TestClouds:
    def test_single_atom(self):
        assert w2_point_clouds([[1.0, 2.0]], [[4.0, 6.0]]).distance == 5.0

    def test_identical(self):
        r = w2_point_clouds([0.0, 1.0], [0.0, 1.0])
        assert r.distance == 0.0 and r.certified

    def test_1d_example(self):
        assert w2_point_clouds([0.0, 2.0], [1.0, 3.0]).distance == 1.0
        assert w2_point_clouds([0.0, 2.0], [1.0, 3.0], method="assignment").distance == 1.0

    @pytest.mark.parametrize("seed", range(8))
    def test_factorial_oracle_2d(self, seed):
        rng = np.random.default_rng(seed)
        A, B = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        cost = np.array([[np.sum((a - b) ** 2) for b in B] for a in A])
        r = w2_point_clouds(A, B)
        assert r.method == "assignment"
        assert r.distance == pytest.approx(brute_force(cost), abs=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(WassersteinError):
            w2_point_clouds(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_sort_equals_assignment_exactly(self):
        rng = np.random.default_rng(1)
        for k in (1, 5, 37, 200):
            a, b = rng.normal(size=k), rng.exponential(size=k)
            assert w2_point_clouds(a, b, method="sort").distance == w2_point_clouds(a, b, method="assignment").distance

    def test_above_cap_falls_back(self):
        rng = np.random.default_rng(2)
        A, B = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
        r = w2_point_clouds(A, B, cap=10)
        assert r.method == "sinkhorn" and not r.certified

    def test_sinkhorn_not_below_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            A, B = rng.normal(size=(40, 2)), rng.normal(size=(40, 2)) + 0.5
            exact = w2_point_clouds(A, B).distance
            C = np.sum((A[:, None] - B[None]) ** 2, axis=-1)
            P, cost = sinkhorn(C)
            eps = 0.01 * np.median(C)
            # marginals are close to uniform after 500 sweeps
            np.testing.assert_allclose(P.sum(axis=0), 1 / 40, atol=1e-6)
            assert cost >= exact**2 - 1e-9
            # entropic plans are within eps * log(k^2) of optimal
            assert cost <= exact**2 + eps * 2 * np.log(40) + 1e-9
            assert w2_point_clouds(A, B, method="sinkhorn").distance >= exact - 1e-9


class TestMetricAxioms:
    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (3, 5, 2), elements=st.floats(-5, 5)))
    def test_symmetry_and_triangle(self, X):
        a, b, c = X
        ab, ba = w2_point_clouds(a, b).distance, w2_point_clouds(b, a).distance
        assert ab == ba
        assert w2_point_clouds(a, c).distance <= ab + w2_point_clouds(b, c).distance + 1e-9

    def test_zero_iff_same_multiset(self):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(6, 3))
        assert w2_point_clouds(A, A[rng.permutation(6)]).distance == 0.0
        B = A.copy()
        B[0, 0] += 1e-6
        assert w2_point_clouds(A, B).distance > 0


class TestPaths:
    def test_identical_sets(self):
        rng = np.random.default_rng(5)
        P = [random_path(rng) for _ in range(4)]
        assert w2_paths(P, P).distance == 0.0
        assert w2_upper_sup(P, P) == 0.0

    def test_constant_shift(self):
        rng = np.random.default_rng(6)
        P = [random_path(rng) for _ in range(4)]
        v = np.array([0.6, -0.8])
        Q = [p + v for p in P]
        assert w2_paths(P, Q).distance == pytest.approx(1.0, abs=1e-12)
        assert w2_upper_sup(P, Q) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_three_paths_factorial_oracle(self, seed):
        rng = np.random.default_rng(seed)
        P = [random_path(rng) for _ in range(3)]
        Q = [random_path(rng) for _ in range(3)]
        t = float(rng.uniform(0.3, 1.0))
        cost = np.array([[uniform_distance(p, q, t) ** 2 for q in Q] for p in P])
        assert w2_paths(P, Q, t).distance == pytest.approx(brute_force(cost), abs=1e-12)

    def test_upper_bound_dominates(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            P = [random_path(rng) for _ in range(6)]
            Q = [random_path(rng) for _ in range(6)]
            assert w2_upper_sup(P, Q) >= w2_paths(P, Q).distance - 1e-12

    def test_array_input(self):
        rng = np.random.default_rng(8)
        VA, VB = rng.normal(size=(5, 7, 2)), rng.normal(size=(5, 7, 2))
        cost = np.max(np.sum((VA[:, None] - VB[None]) ** 2, axis=-1), axis=-1)
        assert w2_paths(VA, VB).distance == pytest.approx(brute_force(cost), abs=1e-12)

    def test_horizon_mismatch(self):
        p = CadlagPath.constant([0.0], 1.0)
        q = CadlagPath.constant([0.0], 2.0)
        with pytest.raises(WassersteinError):
            w2_paths([p], [q])
