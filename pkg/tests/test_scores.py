import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochgeo.geometry import build_window, miniball
from stochgeo.processes import PointConfiguration
from stochgeo.scores import (
    CliqueCountScore,
    ConstantScore,
    CoverageScore,
    DegreeScore,
    EdgeLengthScore,
    IntrinsicVolumeScore,
    KnnEdgeScore,
    MorseScore,
    TruncatedScore,
    buffered_statistic,
    cech_simplices,
    knn_edges,
    total_statistic,
    weighted_measure_integral,
)

EQUI = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.866]])
LINE3 = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])


def H(score, pts):
    return float(np.sum(score.values(np.asarray(pts, dtype=float))))


def cfg(pts, n=100.0):
    return PointConfiguration(np.asarray(pts, dtype=float), build_window(n, 2))


# --- examples ---------------------------------------------------------------


def test_clique_examples():
    assert H(CliqueCountScore(2, 0.6), [[0, 0], [1, 0]]) == pytest.approx(1)
    assert H(CliqueCountScore(3, 0.6), EQUI) == pytest.approx(1)
    assert H(CliqueCountScore(3, 0.5), EQUI) == 0
    assert H(CliqueCountScore(2, 0.5), EQUI) == pytest.approx(3)


def test_edge_examples():
    s = EdgeLengthScore(1.0)
    assert np.allclose(s.values(np.array([[0, 0], [0.5, 0]])), [0.25, 0.25])
    assert s(np.array([0.0, 0.0]), np.array([[0.0, 0.0]])) == 0
    assert H(s, LINE3) == pytest.approx(2)


def test_edge_dense_and_tree_paths_agree():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-3, 3, size=(120, 2))
    s = EdgeLengthScore(0.8)
    small = pts[:40]
    brute = np.array([0.5 * sum(np.linalg.norm(p - q) for q in small if 0 < np.linalg.norm(p - q) <= 0.8) for p in small])
    assert np.allclose(s.values(small), brute)
    brute = np.array([0.5 * sum(np.linalg.norm(p - q) for q in pts if 0 < np.linalg.norm(p - q) <= 0.8) for p in pts])
    assert np.allclose(s.values(pts), brute)


def test_degree_examples():
    # unit-spaced path: at r=0.5 the edges are exactly the two unit segments
    assert H(DegreeScore(1, 0.5), LINE3) == pytest.approx(2)
    assert H(DegreeScore(1, 0.5), [[0, 0], [1, 0], [5, 0], [6, 0]]) == 0
    assert H(DegreeScore(1, 10.0), EQUI) == pytest.approx(6)


def test_degree_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(20):
        pts = rng.uniform(0, 3, size=(14, 2))
        r = 0.6
        edges = [e for e in itertools.combinations(range(14), 2) if miniball(pts[list(e)])[1] <= r]
        want = sum(1 for a in edges for b in edges if a != b and len(set(a) & set(b)) == 1)
        assert H(DegreeScore(1, r), pts) == pytest.approx(want)


def test_morse_examples():
    assert H(MorseScore(1, 0.6), [[0, 0], [1, 0]]) == pytest.approx(1)
    assert H(MorseScore(1, 0.4), [[0, 0], [1, 0]]) == 0
    for r in [0.5, 1.0, 5.0]:
        assert H(MorseScore(2, r), [[0, 0], [2, 0], [1, 1]]) == 0
    assert H(MorseScore(2, 0.6), EQUI) == pytest.approx(1)


def test_coverage_examples():
    r = 0.5
    one = H(CoverageScore(1, r), [[0, 0]])
    assert one == pytest.approx(math.pi * r * r, rel=1e-3)
    assert H(CoverageScore(2, r), [[0, 0]]) == 0
    assert H(CoverageScore(1, r), [[0, 0], [5, 0]]) == pytest.approx(2 * math.pi * r * r, rel=1e-3)


def test_coverage_two_cover_of_lens():
    r, d = 1.0, 1.0
    alpha = math.acos(d / (2 * r))
    lens = 2 * r * r * alpha - 0.5 * d * math.sqrt(4 * r * r - d * d)
    assert H(CoverageScore(2, r, 20000), [[0, 0], [d, 0]]) == pytest.approx(lens, rel=2e-3)


def test_intrinsic_volume_examples():
    r = 1.0
    pts = [[0.0, 0.0]]
    assert H(IntrinsicVolumeScore(2, r), pts) == pytest.approx(math.pi)
    assert H(IntrinsicVolumeScore(1, r), pts) == pytest.approx(math.pi)
    assert H(IntrinsicVolumeScore(0, r), pts) == pytest.approx(1)
    assert H(IntrinsicVolumeScore(2, r), [[0, 0], [2, 0]]) == pytest.approx(2 * math.pi)


def test_intrinsic_volume_two_disk_closed_forms():
    r, d = 1.0, 1.2
    alpha = math.acos(d / (2 * r))
    lens = 2 * r * r * alpha - 0.5 * d * math.sqrt(4 * r * r - d * d)
    pts = [[0, 0], [d, 0]]
    assert H(IntrinsicVolumeScore(2, r), pts) == pytest.approx(2 * math.pi - lens)
    assert H(IntrinsicVolumeScore(1, r), pts) == pytest.approx(0.5 * 2 * (2 * math.pi - 2 * alpha) * r)


def test_intrinsic_area_against_grid():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 2.5, size=(9, 2))
    r = 0.5
    g = np.linspace(-0.6, 3.1, 1401)
    xx, yy = np.meshgrid(g, g)
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    covered = np.zeros(len(grid), bool)
    for p in pts:
        covered |= np.sum((grid - p) ** 2, axis=1) <= r * r
    area = covered.mean() * (g[-1] - g[0]) ** 2
    assert H(IntrinsicVolumeScore(2, r), pts) == pytest.approx(area, rel=5e-3)


def test_knn_examples():
    s = KnnEdgeScore(1)
    line = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    assert H(s, line) == pytest.approx(3)
    assert np.allclose(s.values(np.array([[0.0, 0.0], [2.0, 0.0]])), [1, 1])
    e = knn_edges(EQUI * 0 + np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]), 1)
    assert len(e) == 2
    assert np.array_equal(e, knn_edges(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]), 1))


def test_total_statistic_examples():
    w = build_window(100, 2)
    assert total_statistic(EdgeLengthScore(1), PointConfiguration(np.zeros((0, 2)), w)) == 0
    pts = np.random.default_rng(0).uniform(-5, 5, size=(37, 2))
    assert total_statistic(ConstantScore(), PointConfiguration(pts, w)) == 37
    assert total_statistic(EdgeLengthScore(1), cfg(LINE3)) == pytest.approx(2)


def test_buffered_statistic_half_edge():
    w = build_window(4, 2)  # [-1, 1]^2
    pts = np.array([[0.9, 0.0], [1.2, 0.0], [-0.5, -0.5]])
    c = PointConfiguration(pts, w, w.enlarged(1.0))
    hhat, _ = buffered_statistic(EdgeLengthScore(0.5), c)
    h = total_statistic(EdgeLengthScore(0.5), c)
    assert hhat - h == pytest.approx(0.15)
    interior = PointConfiguration(np.array([[0.0, 0.0], [0.3, 0.0]]), w, w.enlarged(1.0))
    assert buffered_statistic(EdgeLengthScore(0.5), interior)[0] == pytest.approx(total_statistic(EdgeLengthScore(0.5), interior))
    assert buffered_statistic(ConstantScore(), c)[0] == 2 == total_statistic(ConstantScore(), c)


def test_weighted_measure_examples():
    w = build_window(4, 2)
    pts = np.array([[-0.5, 0.2], [0.5, 0.2], [-0.3, -0.9], [0.3, -0.9]])
    c = PointConfiguration(pts, w)
    one = weighted_measure_integral(ConstantScore(), c, lambda x: np.ones(len(x)))
    assert one == 4
    left = weighted_measure_integral(ConstantScore(), c, lambda x: (x[:, 0] < 0).astype(float))
    assert left == 2
    three = PointConfiguration(np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]), w)
    # locations rescaled by n^{-1/2} = 1/2: x1 in {0, 0.5, -0.5}; edge scores 1, 0.5, 0.5 at r=1
    got = weighted_measure_integral(EdgeLengthScore(1.0), three, lambda x: x[:, 0] + 1)
    assert got == pytest.approx(1.0 * 1 + 0.5 * 1.5 + 0.5 * 0.5)


# --- properties -------------------------------------------------------------

FAMILIES = [
    EdgeLengthScore(0.7),
    CliqueCountScore(3, 0.6),
    DegreeScore(1, 0.5),
    MorseScore(1, 0.6),
    MorseScore(2, 0.6),
    CoverageScore(1, 0.5, 256),
    IntrinsicVolumeScore(0, 0.5),
    IntrinsicVolumeScore(1, 0.5),
    IntrinsicVolumeScore(2, 0.5),
    KnnEdgeScore(2),
    ConstantScore(),
]


@pytest.mark.parametrize("score", FAMILIES, ids=lambda s: f"{s.tag}")
@given(seed=st.integers(0, 10**6), tx=st.floats(-50, 50), ty=st.floats(-50, 50))
def test_translation_invariance(score, seed, tx, ty):
    pts = np.random.default_rng(seed).uniform(-1.5, 1.5, size=(12, 2))
    t = np.array([tx, ty])
    a = score.values(pts)
    b = score.values(pts + t)
    assert np.allclose(a, b, atol=1e-9 * max(1.0, np.abs(a).max()))


def _stabilization_trials(score, trials, seed):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        pts = rng.uniform(-1.5, 1.5, size=(int(rng.integers(5, 25)), 2))
        x = pts[0]
        rad = score.stabilization_radius(x, pts)
        base = score(x, pts)
        if not math.isfinite(rad):
            continue
        dist = np.linalg.norm(pts - x, axis=1)
        far = np.flatnonzero(dist > rad)
        drop = far[rng.uniform(size=len(far)) < 0.5]
        kept = np.delete(pts, drop, axis=0)
        extra = rng.uniform(-6, 6, size=(40, 2))
        extra = extra[np.linalg.norm(extra - x, axis=1) > rad][: int(rng.integers(0, 15))]
        mod = np.vstack([kept, extra])
        bad += abs(score(x, mod) - base) > 1e-9 * max(1.0, abs(base))
    return bad


@pytest.mark.parametrize("score", [s for s in FAMILIES if s.tag != "coverage"], ids=lambda s: f"{s.tag}")
def test_stabilization_adversarial(score):
    assert _stabilization_trials(score, 1000 if score.tag in ("edge_length", "clique", "degree", "constant") else 200, 5) == 0


def test_stabilization_adversarial_coverage():
    assert _stabilization_trials(CoverageScore(1, 0.5, 128), 150, 6) == 0


def test_truncated_score_radius_bound():
    base = KnnEdgeScore(1)
    t = 1.5
    trunc = TruncatedScore(base, t)
    assert trunc.fixed_radius == t
    assert _stabilization_trials(trunc, 300, 9) == 0


@pytest.mark.parametrize("score,limit", [(EdgeLengthScore(0.5), 0.5), (CliqueCountScore(3, 0.5), 1.0),
                                         (DegreeScore(1, 0.5), 2.0), (MorseScore(2, 0.5), 1.0)])
def test_u_statistic_radius_declared(score, limit):
    # each score's declared radius covers its own construction: spread of the members it touches
    assert score.fixed_radius >= limit - 1e-12


def test_euler_characteristic_matches_simplex_counts():
    rng = np.random.default_rng(21)
    r = 0.45
    for _ in range(100):
        m = int(rng.integers(3, 31))
        pts = rng.uniform(0, 4, size=(m, 2))
        chi = H(IntrinsicVolumeScore(0, r), pts)
        counts = []
        while not counts or counts[-1]:
            counts.append(len(cech_simplices(pts, len(counts) + 1, r)))
        alt = sum((-1) ** j * c for j, c in enumerate(counts))
        via_clique = sum((-1) ** (k - 1) * H(CliqueCountScore(k, r), pts) for k in range(1, len(counts) + 1))
        assert chi == pytest.approx(alt, abs=1e-9)
        assert via_clique == pytest.approx(alt, abs=1e-9)


def test_morse_counts_give_euler_characteristic():
    # critical values <= r: chi(union of r-disks) = #points - #index1 + #index2
    rng = np.random.default_rng(33)
    r = 0.45
    for _ in range(60):
        pts = rng.uniform(0, 3, size=(int(rng.integers(3, 25)), 2))
        chi = H(IntrinsicVolumeScore(0, r), pts)
        morse = len(pts) - H(MorseScore(1, r), pts) + H(MorseScore(2, r), pts)
        assert morse == pytest.approx(chi, abs=1e-9)


def test_cech_simplices_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(10):
        pts = rng.uniform(0, 2, size=(12, 2))
        r = 0.5
        for k in (2, 3, 4):
            got = {tuple(s) for s in cech_simplices(pts, k, r)}
            want = {c for c in itertools.combinations(range(12), k) if miniball(pts[list(c)])[1] <= r}
            assert got == want


def test_knn_degree_bound():
    rng = np.random.default_rng(5)
    for k in (1, 2, 3):
        for _ in range(20):
            pts = rng.uniform(0, 5, size=(200, 2))
            e = knn_edges(pts, k)
            deg = np.bincount(e.ravel(), minlength=len(pts))
            assert deg.max() <= 6 * k


def test_knn_matches_brute_force_with_ties():
    # integer lattice has many ties; brute force uses the same lexicographic tie order
    g = np.array([[i, j] for i in range(5) for j in range(5)], dtype=float)
    for k in (1, 2, 3):
        want = set()
        for i, p in enumerate(g):
            order = sorted((j for j in range(len(g)) if j != i), key=lambda j: (np.linalg.norm(g[j] - p), *g[j]))
            for j in order[:k]:
                want.add((min(i, j), max(i, j)))
        assert {tuple(e) for e in knn_edges(g, k)} == want
