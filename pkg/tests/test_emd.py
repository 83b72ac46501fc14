import numpy as np
import pytest
from scipy.optimize import linprog

from ambiup.emd import transport
from ambiup.metrics import EnergyMap, default_sampling, emd, ground_cost
from ambiup.sphmath import SphereSampling, fibonacci_sphere


def lp_oracle(a, b, C):
    m, n = C.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A_eq[m + j, j::n] = 1
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


@pytest.mark.parametrize("m, n", [(1, 5), (5, 1), (3, 4), (10, 10), (40, 25)])
def test_matches_linear_programming(rng, m, n):
    for _ in range(3):
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        C = rng.random((m, n))
        cost, plan = transport(a, b, C)
        assert cost == pytest.approx(lp_oracle(a, b, C), abs=1e-10)
        np.testing.assert_allclose(plan.sum(axis=1), a, atol=1e-12)
        np.testing.assert_allclose(plan.sum(axis=0), b, atol=1e-12)
        assert np.all(plan >= -1e-15)


def test_lattice_maps_match_lp(rng):
    s = fibonacci_sphere(64)
    C = ground_cost(s)
    a, b = rng.dirichlet(np.ones(64) * 0.5), rng.dirichlet(np.ones(64) * 0.5)
    assert transport(a, b, C)[0] == pytest.approx(lp_oracle(a, b, C), abs=1e-10)


def test_degenerate_and_sparse_masses():
    C = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    assert transport([1, 0, 0], [0, 0, 1], C)[0] == pytest.approx(2.0)
    assert transport([0.5, 0.5, 0], [0.5, 0.5, 0], C)[0] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        transport([1, 0], [0.5, 0.5, 0], C)
    with pytest.raises(ValueError):
        transport([-1, 2, 0], [0, 0, 1], C)


def point_mass(s, index):
    w = np.zeros(len(s))
    w[index] = 1.0
    return EnergyMap(s, w, 0.0, 0.1)


def antipodal_lattice(half=64):
    """Half a Fibonacci lattice plus the antipode of every point (128 points for half=64)."""
    base = fibonacci_sphere(2 * half).unit_vectors[:half]
    v = np.vstack([base, -base])
    return SphereSampling(np.arctan2(v[:, 1], v[:, 0]), np.arcsin(np.clip(v[:, 2], -1, 1)))


def test_antipodal_anchor():
    s = antipodal_lattice()
    assert len(s) == 128
    for i in (0, 17, 63):
        assert emd(point_mass(s, i), point_mass(s, i + 64)) == pytest.approx(2.0, abs=1e-9)
    fb = SphereSampling(np.array([0.0, np.pi, np.pi / 2]), np.zeros(3))
    assert emd(point_mass(fb, 0), point_mass(fb, 1)) == pytest.approx(2.0, abs=1e-12)


def test_identity_and_symmetry(rng):
    s = default_sampling(128)
    a = EnergyMap(s, rng.dirichlet(np.ones(128)), 0, 0.1)
    b = EnergyMap(s, rng.dirichlet(np.ones(128)), 0, 0.1)
    assert emd(a, a) == pytest.approx(0.0, abs=1e-12)
    assert emd(a, b) == pytest.approx(emd(b, a), abs=1e-9)


def test_mismatched_samplings_rejected():
    a = point_mass(fibonacci_sphere(10), 0)
    b = point_mass(fibonacci_sphere(12), 0)
    with pytest.raises(ValueError):
        emd(a, b)


def test_cosine_cost_triangle_counterexample():
    """1 - cos is not a metric: masses at 0, 60 and 120 degrees break the triangle inequality."""
    C = np.array([[1 - np.cos(np.radians(abs(x - y))) for y in (0, 60, 120)] for x in (0, 60, 120)])
    direct = transport([1, 0, 0], [0, 0, 1], C)[0]
    via = transport([1, 0, 0], [0, 1, 0], C)[0] + transport([0, 1, 0], [0, 0, 1], C)[0]
    assert direct > via
