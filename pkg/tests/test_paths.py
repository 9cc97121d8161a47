from fractions import Fraction

import numpy as np
import pytest

from rmv.paths import (
    CadlagPath,
    PathError,
    pairing_integral,
    read_csv,
    running_pairing,
    sup_norm,
    total_variation,
    uniform_distance,
    write_csv,
)


def random_path(rng, n, d=2, T=1.0):
    times = np.concatenate([[0.0], np.sort(rng.uniform(0, T, n - 1))])
    return CadlagPath(times, rng.normal(size=(n, d)), T)


def test_evaluation_is_right_continuous():
    p = CadlagPath([0, 0.5], [[1.0], [2.0]], 1.0)
    assert p(0.5)[0] == 2.0
    assert p(0.5 - 1e-12)[0] == 1.0
    assert p.left_limit(0.5)[0] == 1.0
    assert p(1.0)[0] == 2.0


def test_rejects_malformed():
    with pytest.raises(PathError):
        CadlagPath([0.1], [[1.0]], 1.0)
    with pytest.raises(PathError):
        CadlagPath([0, 0.5, 0.4], [[1.0], [2.0], [3.0]], 1.0)
    with pytest.raises(PathError):
        CadlagPath([0, 2.0], [[1.0], [2.0]], 1.0)
    with pytest.raises(PathError):
        CadlagPath([0, 0.5], [[1.0]], 1.0)


def test_sup_norm_examples():
    assert sup_norm(CadlagPath.constant([3.0, 4.0], 1.0)) == 5.0
    assert sup_norm(CadlagPath.constant([0.0, 0.0], 1.0)) == 0.0
    assert sup_norm(CadlagPath([0, 0.5], [[1, 0], [0, 3]], 1.0)) == 3.0


def test_total_variation_examples():
    assert total_variation(CadlagPath.constant([1.0], 1.0)) == 0.0
    assert total_variation(CadlagPath([0, 0.3, 0.6], [[0.0], [1.0], [0.0]], 1.0)) == 2.0


def test_total_variation_partition_oracle():
    rng = np.random.default_rng(0)
    p = random_path(rng, 20)
    tv = total_variation(p)
    # every partition gives at most the jump sum; partitions through all breakpoints attain it
    for _ in range(200):
        part = np.sort(rng.uniform(0, 1, rng.integers(2, 40)))
        vals = p(np.concatenate([[0.0], part, [1.0]]))
        assert np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1)) <= tv + 1e-12
    vals = p(np.concatenate([p.times, [1.0]]))
    assert np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1)) == pytest.approx(tv, abs=1e-12)


def test_total_variation_dominates_net_increment():
    rng = np.random.default_rng(1)
    for _ in range(50):
        k = random_path(rng, 10, d=1)
        assert total_variation(k) >= abs(k.values[-1, 0] - k.values[0, 0]) - 1e-12
    mono = CadlagPath([0, 0.2, 0.7], [[0.0], [1.0], [1.5]], 1.0)
    assert total_variation(mono) == pytest.approx(1.5)


def test_pairing_examples():
    f = CadlagPath.constant([1.0, 2.0], 1.0)
    assert pairing_integral(f, CadlagPath.constant([3.0, 3.0], 1.0), 1.0) == 0.0
    k = CadlagPath([0, 0.2, 0.5], [[0, 0], [1, 1], [3, -1]], 1.0)
    assert pairing_integral(f, k, 1.0) == pytest.approx(np.dot([1, 2], [3, -1]))
    assert pairing_integral(f, k, 0.3) == pytest.approx(np.dot([1, 2], [1, 1]))


def test_pairing_uses_integrand_at_jump_time():
    f = CadlagPath([0, 0.5], [[1.0], [10.0]], 1.0)
    k = CadlagPath([0, 0.5], [[0.0], [1.0]], 1.0)
    assert pairing_integral(f, k) == 10.0


def test_pairing_matches_exact_rational_summation():
    rng = np.random.default_rng(2)
    for _ in range(20):
        f, k = random_path(rng, 10), random_path(rng, 10)
        total = Fraction(0)
        for u, kv, kprev in zip(k.times[1:], k.values[1:], k.values[:-1]):
            fu = f(u)
            total += sum(Fraction(float(a)) * (Fraction(float(b)) - Fraction(float(c))) for a, b, c in zip(fu, kv, kprev))
        assert pairing_integral(f, k) == pytest.approx(float(total), abs=1e-12)


def test_pairing_bilinear_and_additive():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f1, f2, k = random_path(rng, 8), random_path(rng, 8), random_path(rng, 8)
        a, b = rng.normal(size=2)
        lhs = pairing_integral(f1 * a + f2 * b, k)
        rhs = a * pairing_integral(f1, k) + b * pairing_integral(f2, k)
        assert lhs == pytest.approx(rhs, abs=1e-12)
        s = rng.uniform(0, 1)
        t_grid, run = running_pairing(f1, k)
        assert run[-1] == pytest.approx(pairing_integral(f1, k), abs=1e-12)
        upto_s = pairing_integral(f1, k, s)
        after = sum(np.dot(f1(u), dk) for u, dk in zip(*k.jumps()) if u > s)
        assert upto_s + after == pytest.approx(pairing_integral(f1, k), abs=1e-12)


def test_uniform_distance():
    rng = np.random.default_rng(4)
    p = random_path(rng, 6)
    assert uniform_distance(p, p) == 0.0
    v = np.array([0.3, -0.4])
    assert uniform_distance(p, p + v) == pytest.approx(0.5)
    q = random_path(rng, 6)
    dense = np.linspace(0, 1, 200001)
    dense = np.union1d(dense, np.union1d(p.times, q.times))
    oracle = np.max(np.linalg.norm(p(dense) - q(dense), axis=1))
    assert uniform_distance(p, q) == pytest.approx(oracle, abs=1e-12)


def test_sup_norm_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(30):
        a, b = random_path(rng, 7), random_path(rng, 5)
        assert sup_norm(a + b) <= sup_norm(a) + sup_norm(b) + 1e-12


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    p = random_path(rng, 5, d=3)
    f = tmp_path / "p.csv"
    text = write_csv(p, f)
    assert text.splitlines()[0] == "t,v1,v2,v3"
    q = read_csv(f, 1.0)
    np.testing.assert_array_equal(q.times, p.times)
    np.testing.assert_array_equal(q.values, p.values)


def test_csv_requires_header(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("0,1\n0.5,2\n")
    with pytest.raises(PathError):
        read_csv(f, 1.0)


def test_horizon_continuity_flag():
    assert CadlagPath([0, 0.5], [[0.0], [1.0]], 1.0).continuous_at_horizon()
    assert not CadlagPath([0, 1.0], [[0.0], [1.0]], 1.0).continuous_at_horizon()
    assert CadlagPath([0, 1.0], [[0.0], [0.0]], 1.0).continuous_at_horizon()
