from itertools import combinations, permutations

import numpy as np
import pytest

from tomomotion.errors import DegenerateSetError, InvalidArgumentError, TooFewPointsError
from tomomotion.phantoms.pointsets import (
    PointSet,
    balance_weights,
    cap_coverage,
    dt_pointset_certificate,
    fibonacci_sphere,
    generate_asymmetric_pointset,
    pb_pointset_certificate,
    pointset_direction_witness,
)


@pytest.fixture(scope="module")
def set8():
    return generate_asymmetric_pointset(8, seed=1, placement="ball")


def brute_dt_min(P):
    """Slow reference: loops over all ordered six-tuples."""
    best = np.inf
    for c in combinations(range(len(P)), 6):
        for perm in permutations(c):
            i, j, k, l, m, n = perm
            d = np.linalg.det(np.stack([np.cross(P[i], P[j]), np.cross(P[k], P[l]), np.cross(P[m], P[n])]))
            best = min(best, abs(d))
    return best


def test_generated_set_passes_both_certificates(set8):
    assert len(set8) == 8
    assert dt_pointset_certificate(set8)
    assert pb_pointset_certificate(set8)


def test_generation_is_deterministic():
    a = generate_asymmetric_pointset(9, seed=5)
    b = generate_asymmetric_pointset(9, seed=5)
    assert np.array_equal(a.points, b.points)


def test_dt_certificate_cross_family_matches_brute_force(set8):
    from tomomotion.phantoms import pointsets as ps
    P = np.asarray(set8.points)[:7]
    assert np.isclose(ps._cross_min(P), brute_dt_min(P), rtol=1e-12)


def test_dt_certificate_rejects_coplanar_triple():
    rng = np.random.default_rng(0)
    P = np.vstack([[0.3, 0, 0], [0, 0.3, 0], [0.3, 0.3, 0], rng.uniform(-0.4, 0.4, (5, 3))])
    assert not dt_pointset_certificate(P)


def test_dt_certificate_rejects_three_planes_sharing_a_line():
    # planes span{p1,p2}, span{p3,p4}, span{p5,p6} all contain the e3 axis
    rng = np.random.default_rng(1)
    ang = rng.uniform(0, np.pi, 6)
    z = rng.uniform(0.1, 0.4, 6) * np.array([1, -1, 1, -1, 1, -1])
    base = np.stack([np.cos(ang), np.sin(ang), 0 * ang], 1) * 0.3
    P = base.copy()
    for a, b in [(0, 1), (2, 3), (4, 5)]:
        P[b] = 0.7 * P[a] * (1 + a) / (1 + b)
    P[:, 2] = z
    # p_b is now in span{p_a, e3} for each pair; the cross products are orthogonal to e3
    P[1] = 0.5 * P[0] + np.array([0, 0, 0.2])
    P[3] = 0.5 * P[2] + np.array([0, 0, -0.15])
    P[5] = 0.5 * P[4] + np.array([0, 0, 0.1])
    P = np.vstack([P, rng.uniform(-0.4, 0.4, (2, 3))])
    crosses = [np.cross(P[a], P[b]) for a, b in [(0, 1), (2, 3), (4, 5)]]
    assert abs(np.linalg.det(np.stack(crosses))) < 1e-15
    assert not dt_pointset_certificate(P)


def test_pb_certificate_rejects_parallelogram():
    rng = np.random.default_rng(2)
    P = rng.uniform(-0.4, 0.4, (8, 3))
    P[3] = P[2] + (P[1] - P[0])
    # a third difference inside the span of the first two
    P[5] = P[4] + 0.3 * (P[1] - P[0]) + 0.6 * (P[2] - P[0])
    assert not pb_pointset_certificate(P)


def test_certificates_need_enough_points():
    P = np.random.default_rng(3).uniform(-0.4, 0.4, (7, 3))
    with pytest.raises(TooFewPointsError):
        dt_pointset_certificate(P)
    with pytest.raises(TooFewPointsError):
        pb_pointset_certificate(P[:6])


def test_generator_rejects_small_n():
    with pytest.raises(InvalidArgumentError):
        generate_asymmetric_pointset(7, seed=0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_witness_sweep_agrees_with_certificates(seed):
    P = generate_asymmetric_pointset(8, seed=seed)
    assert dt_pointset_certificate(P) and pb_pointset_certificate(P)
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(1000, 3))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    for xi in X:
        assert pointset_direction_witness(P, xi, "DT") is not None
        assert pointset_direction_witness(P, xi, "PB") is not None


def test_witness_pb_symmetric_set_has_none():
    E = np.eye(3) * 0.4
    P = np.vstack([E, -E])
    assert pointset_direction_witness(P, [0, 0, 1.0], "PB") is None


def test_witness_dt_excludes_point_parallel_to_direction(set8):
    P = np.asarray(set8.points)
    q = P[3]
    xi = q / np.linalg.norm(q)
    pair = pointset_direction_witness(P, xi, "DT")
    assert pair is not None
    for p in pair:
        assert not np.allclose(p, q)


def test_witness_dt_definition_by_hand(set8):
    P = np.asarray(set8.points)
    xi = np.array([0.3, -0.5, 0.8])
    xi /= np.linalg.norm(xi)
    p1, p2 = pointset_direction_witness(P, xi, "DT")
    for p in (p1, p2):
        assert abs(p @ xi) > 1e-8
        a = p - (p @ xi) * xi
        for q in P:
            if np.allclose(q, p):
                continue
            b = q - (q @ xi) * xi
            assert np.linalg.norm(np.cross(a, b)) > 1e-10 * np.linalg.norm(a) * np.linalg.norm(b)


def test_witness_rejects_non_unit_direction(set8):
    with pytest.raises(InvalidArgumentError):
        pointset_direction_witness(set8, [1.0, 1.0, 0.0], "DT")


def test_balance_weights_simple_example():
    P = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1.0]]) * 0.3
    w = balance_weights(P)
    assert np.allclose(w / w[0], [1, 1, 1, -1])
    assert np.abs(w).max() == pytest.approx(1.0)


def test_balance_weights_on_generated_sets():
    for seed in range(5):
        P = np.asarray(generate_asymmetric_pointset(8, seed=seed).points)
        w = balance_weights(P)
        assert np.linalg.norm(w @ P) <= 1e-12 * np.linalg.norm(P, axis=1).max()
        assert np.all(w != 0)
        assert np.abs(w).max() == pytest.approx(1.0, abs=1e-12)


def test_balance_weights_five_points_bounded_away_from_zero():
    P = np.asarray(generate_asymmetric_pointset(8, seed=11).points)[:5]
    w = balance_weights(P)
    assert np.abs(w).min() >= 1e-6 * np.abs(w).max()
    assert np.linalg.norm(w @ P) <= 1e-12


def test_balance_weights_degenerate_triple():
    P = np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0], [0.2, 0.1, 1.0]]) * 0.3
    with pytest.raises(DegenerateSetError):
        balance_weights(P)


def test_pointset_type_validation():
    with pytest.raises(InvalidArgumentError):
        PointSet(np.array([[2.0, 0, 0]]), 1.0)
    with pytest.raises(InvalidArgumentError):
        PointSet(np.array([[0.1, 0, 0], [0.1, 0, 0]]))


def test_fibonacci_sphere_is_unit_and_uniform():
    U = fibonacci_sphere(4096)
    assert np.allclose(np.linalg.norm(U, axis=1), 1)
    assert np.linalg.norm(U.mean(0)) < 1e-3


@pytest.mark.slow
def test_shell_placement_covers_caps():
    eps = 0.1 * 0.9
    P = generate_asymmetric_pointset(26, seed=0, placement="shell", eps=eps, radius=0.9, support_radius=1.0)
    assert len(P) >= 26
    assert np.allclose(np.linalg.norm(P.points, axis=1), 0.9)
    assert cap_coverage(P, eps, 4096) > 0
    assert dt_pointset_certificate(P) and pb_pointset_certificate(P)
