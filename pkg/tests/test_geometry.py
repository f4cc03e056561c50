import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from stochgeo.geometry import (
    DegeneracyError,
    SpatialIndex,
    boundary_overlap,
    build_window,
    circumsphere,
    gamma_angular_mean_2d,
    gamma_limit,
    in_open_convex_hull,
    miniball,
    miniball_radius_triangles,
    neighbors_within,
    set_covariance,
)


@pytest.mark.parametrize("n,d,half", [(16, 2, 2.0), (1, 3, 0.5), (8, 3, 1.0)])
def test_build_window(n, d, half):
    w = build_window(n, d)
    assert w.half == pytest.approx(half)
    assert w.volume == pytest.approx(n)


@pytest.mark.parametrize("bad", [(0, 2), (-1, 2), (float("nan"), 2), (4, 5)])
def test_build_window_rejects(bad):
    with pytest.raises(ValueError):
        build_window(*bad)


def test_neighbors_within_examples():
    idx = SpatialIndex(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]))
    x = np.array([0.0, 0.0])
    assert neighbors_within(idx, x, 1).tolist() == [[1.0, 0.0]]
    assert len(neighbors_within(idx, x, 0.5)) == 0
    assert neighbors_within(idx, x, 3).tolist() == [[1.0, 0.0], [3.0, 0.0]]


@given(st.integers(0, 10_000), st.floats(0.05, 2.0))
def test_neighbors_within_matches_scan(seed, r):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3, 3, size=(60, 2))
    x = pts[0]
    got = {tuple(p) for p in neighbors_within(SpatialIndex(pts), x, r)}
    want = {tuple(p) for p in pts[1:] if np.linalg.norm(p - x) <= r}
    assert got == want


def test_miniball_examples():
    c, r = miniball([[0, 0], [2, 0]])
    assert np.allclose(c, [1, 0]) and r == pytest.approx(1)
    c, r = miniball([[0, 0], [2, 0], [0, 2]])
    assert np.allclose(c, [1, 1]) and r == pytest.approx(math.sqrt(2))
    _, r = miniball([[0, 0], [1, 0], [0.5, 0.866]])
    assert r == pytest.approx(0.5774, abs=1e-4)


def _miniball_oracle(p):
    # independent: smallest t with |p_i - c|^2 <= t, as a smooth constrained program
    x0 = np.append(p.mean(0), np.max(np.sum((p - p.mean(0)) ** 2, 1)))
    cons = {"type": "ineq", "fun": lambda z: z[-1] - np.sum((p - z[:-1]) ** 2, 1)}
    res = minimize(lambda z: z[-1], x0, constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    return math.sqrt(res.x[-1])


def test_miniball_against_optimizer_oracle():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        d = int(rng.integers(2, 4))
        m = int(rng.integers(2, d + 2))
        p = rng.normal(size=(m, d))
        _, r = miniball(p)
        assert r == pytest.approx(_miniball_oracle(p), abs=1e-9)
        # enclosing and no smaller than the farthest-pair half distance
        dmax = max(np.linalg.norm(a - b) for a, b in itertools.combinations(p, 2))
        assert r >= dmax / 2 - 1e-12


def test_miniball_triangle_vectorized_matches_exact():
    rng = np.random.default_rng(3)
    t = rng.normal(size=(500, 3, 2))
    fast = miniball_radius_triangles(t[:, 0], t[:, 1], t[:, 2])
    slow = np.array([miniball(x)[1] for x in t])
    assert np.allclose(fast, slow, rtol=1e-9, atol=1e-12)


def test_circumsphere_examples():
    c, r = circumsphere([[0, 0], [2, 0]])
    assert np.allclose(c, [1, 0]) and r == pytest.approx(1)
    c, r = circumsphere([[0, 0], [2, 0], [1, 1]])
    assert np.allclose(c, [1, 0]) and r == pytest.approx(1)
    c, r = circumsphere([[0, 0], [1, 0], [0, 1]])
    assert np.allclose(c, [0.5, 0.5]) and r == pytest.approx(math.sqrt(2) / 2)


def test_circumsphere_degenerate():
    with pytest.raises(DegeneracyError):
        circumsphere([[0, 0], [1, 0], [2, 0]])


@given(st.integers(0, 100_000), st.integers(2, 3), st.integers(2, 4))
def test_circumsphere_equidistant(seed, d, m):
    m = min(m, d + 1)
    p = np.random.default_rng(seed).normal(size=(m, d))
    try:
        c, r = circumsphere(p)
    except DegeneracyError:
        return
    dist = np.linalg.norm(p - c, axis=1)
    assert np.max(np.abs(dist - r)) <= 1e-9 * max(1.0, r)


def test_in_open_convex_hull_examples():
    assert in_open_convex_hull([1, 0], [[0, 0], [2, 0]])
    assert not in_open_convex_hull([1, 0], [[0, 0], [2, 0], [1, 1]])
    assert in_open_convex_hull([1, 0.3], [[0, 0], [2, 0], [1, 1]])


def test_boundary_overlap_examples():
    w = build_window(1, 2)
    assert boundary_overlap(w, [0.5, 0]) == pytest.approx(0.5)
    assert boundary_overlap(build_window(7.3, 2), [0, 0]) == 0
    # scaled limit tends to |t| + |s|
    for a in [10.0, 100.0, 1000.0]:
        w = build_window(a * a, 2)
        assert boundary_overlap(w, [0.3, -0.7]) / a == pytest.approx(1.0 - 0.21 / a)
    assert gamma_limit([0.3, -0.7]) == pytest.approx(1.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1))
def test_boundary_overlap_symmetric_monotone(y1, y2, e1, e2):
    w = build_window(9.0, 2)
    assert boundary_overlap(w, [y1, y2]) == pytest.approx(boundary_overlap(w, [-y1, -y2]))
    bigger = [math.copysign(abs(y1) + e1, y1), math.copysign(abs(y2) + e2, y2)]
    assert boundary_overlap(w, bigger) >= boundary_overlap(w, [y1, y2]) - 1e-12


def test_set_covariance_complements_overlap():
    w = build_window(16, 2)
    z = np.array([[0.5, 1.0], [3.0, 0.2]])
    cov = set_covariance(w, z)
    assert np.allclose(cov, [w.volume - boundary_overlap(w, y) for y in z])


def test_gamma_angular_mean_quadrature():
    theta = np.linspace(0, 2 * math.pi, 200_001)[:-1]
    s = 1.7
    num = np.mean(np.abs(s * np.cos(theta)) + np.abs(s * np.sin(theta)))
    assert gamma_angular_mean_2d(s) == pytest.approx(num, rel=1e-9)
