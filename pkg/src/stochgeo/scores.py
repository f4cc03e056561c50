"""Score functions and the statistics built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DegeneracyError, circumsphere, in_open_convex_hull, miniball, miniball_radius_triangles
from .processes import PointConfiguration

REL_TOL = 1e-12


def _le(a, b):
    return a <= b * (1.0 + REL_TOL) + 1e-300


def _pairs(pts: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    if len(pts) < 2:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    p = cKDTree(pts).query_pairs(r * (1.0 + REL_TOL), output_type="ndarray")
    if len(p) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    p = np.sort(p, axis=1).astype(np.int64)
    p = p[np.lexsort((p[:, 1], p[:, 0]))]
    dist = np.linalg.norm(pts[p[:, 0]] - pts[p[:, 1]], axis=1)
    keep = _le(dist, r)
    return p[keep], dist[keep]


def _triangles(pairs: np.ndarray, npts: int) -> np.ndarray:
    """All (i<j<k) with every side present in the sorted pair list."""
    if len(pairs) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    keys = pairs[:, 0] * npts + pairs[:, 1]
    start = np.searchsorted(pairs[:, 0], np.arange(npts + 1))
    outdeg = np.diff(start)
    j = pairs[:, 1]
    reps = outdeg[j]
    i_rep = np.repeat(pairs[:, 0], reps)
    j_rep = np.repeat(j, reps)
    # Offsets into j's out-neighbour list.
    first = np.repeat(start[j], reps)
    pos = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
    k_rep = pairs[first + pos, 1]
    want = i_rep * npts + k_rep
    loc = np.searchsorted(keys, want)
    loc = np.minimum(loc, len(keys) - 1)
    hit = keys[loc] == want
    return np.column_stack([i_rep[hit], j_rep[hit], k_rep[hit]])


def _extend_cliques(cliques: np.ndarray, adj: list[set]) -> np.ndarray:
    out = []
    for c in cliques:
        common = set.intersection(*(adj[v] for v in c))
        for v in sorted(common):
            if v > c[-1]:
                out.append(tuple(c) + (v,))
    if not out:
        return np.zeros((0, cliques.shape[1] + 1), dtype=np.int64)
    return np.array(out, dtype=np.int64)


def cech_simplices(pts: np.ndarray, size: int, r: float) -> np.ndarray:
    """Index sets (sorted rows) of ``size`` points whose miniball radius is at most r."""
    n = len(pts)
    if size == 1:
        return np.arange(n, dtype=np.int64)[:, None]
    pairs, _ = _pairs(pts, 2 * r)
    if size == 2:
        return pairs
    tri = _triangles(pairs, n)
    if len(tri):
        rad = miniball_radius_triangles(pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]])
        tri = tri[_le(rad, r)]
    cur = tri
    if size == 3:
        return cur
    adj = [set() for _ in range(n)]
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)
    for m in range(4, size + 1):
        cur = _extend_cliques(cur, adj)
        if len(cur) == 0:
            return cur
        keep = np.array([_le(miniball(pts[c])[1], r) for c in cur], dtype=bool)
        cur = cur[keep]
    return cur


class Score:
    """Base class: ``values`` gives xi(x_i, X) for the rows ``idx`` of ``pts``."""

    tag = "score"

    def values(self, pts: np.ndarray, idx: np.ndarray | None = None) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        full = self._all_values(pts)
        return full if idx is None else full[idx]

    def _all_values(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def fixed_radius(self) -> float | None:
        return None

    def radius(self, pts: np.ndarray, idx: np.ndarray | None = None) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        m = len(pts) if idx is None else len(idx)
        return np.full(m, self.fixed_radius)

    def __call__(self, x, pts) -> float:
        pts = np.asarray(pts, dtype=float).reshape(-1, np.size(x))
        hit = np.flatnonzero(np.all(pts == np.asarray(x, dtype=float), axis=1))
        if len(hit) == 0:
            return 0.0
        return float(self.values(pts, hit[:1])[0])

    def stabilization_radius(self, x, pts) -> float:
        pts = np.asarray(pts, dtype=float).reshape(-1, np.size(x))
        hit = np.flatnonzero(np.all(pts == np.asarray(x, dtype=float), axis=1))
        if len(hit) == 0:
            return 0.0
        return float(self.radius(pts, hit[:1])[0])

    def describe(self) -> dict:
        return {"score": self.tag}


class ConstantScore(Score):
    tag = "constant"

    def _all_values(self, pts):
        return np.ones(len(pts))

    @property
    def fixed_radius(self):
        return 0.0


@dataclass
class EdgeLengthScore(Score):
    r: float
    tag = "edge_length"

    def _all_values(self, pts):
        if len(pts) <= 48:
            dd = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
            return 0.5 * np.sum(np.where(_le(dd, self.r), dd, 0.0), axis=1)
        out = np.zeros(len(pts))
        p, dist = _pairs(pts, self.r)
        np.add.at(out, p[:, 0], 0.5 * dist)
        np.add.at(out, p[:, 1], 0.5 * dist)
        return out

    @property
    def fixed_radius(self):
        return self.r

    def describe(self):
        return {"score": self.tag, "r": self.r}


@dataclass
class CliqueCountScore(Score):
    """Per-point share of Cech (k-1)-simplices at radius r."""

    k: int
    r: float
    tag = "clique"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def _all_values(self, pts):
        out = np.zeros(len(pts))
        simp = cech_simplices(pts, self.k, self.r)
        if len(simp):
            np.add.at(out, simp.ravel(), 1.0 / self.k)
        return out

    @property
    def fixed_radius(self):
        return 2.0 * self.r if self.k > 1 else 0.0

    def describe(self):
        return {"score": self.tag, "k": self.k, "r": self.r}


@dataclass
class DegreeScore(Score):
    """Down-degree share: H counts ordered pairs of k-simplices sharing a (k-1)-face."""

    k: int
    r: float
    tag = "degree"

    def _all_values(self, pts):
        out = np.zeros(len(pts))
        simp = cech_simplices(pts, self.k + 1, self.r)
        if len(simp) == 0:
            return out
        m = self.k + 1
        faces = []
        owners = []
        for drop in range(m):
            keep = [c for c in range(m) if c != drop]
            faces.append(simp[:, keep])
            owners.append(simp[:, drop])
        faces = np.concatenate(faces)
        owners = np.concatenate(owners)
        _, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
        np.add.at(out, owners, counts[inv.ravel()] - 1.0)
        return out

    @property
    def fixed_radius(self):
        return 4.0 * self.r

    def describe(self):
        return {"score": self.tag, "k": self.k, "r": self.r}


def _open_ball_occupied(tree: cKDTree, centers: np.ndarray, radii: np.ndarray, members: np.ndarray) -> np.ndarray:
    out = np.zeros(len(centers), dtype=bool)
    for t, (c, rad) in enumerate(zip(centers, radii)):
        if rad <= 0:
            continue
        idx = tree.query_ball_point(c, rad * (1.0 - 1e-9))
        if any(i not in members[t] for i in idx):
            out[t] = True
    return out


@dataclass
class MorseScore(Score):
    """Index-k critical points of the distance function to X (d=2, k in {1,2})."""

    k: int
    r: float
    tag = "morse"

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ValueError("Morse score supports k in {1, 2}")

    def critical_sets(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.shape[1] != 2:
            raise ValueError("Morse score requires d=2")
        pairs, dist = _pairs(pts, 2 * self.r)
        if len(pairs) == 0:
            return np.zeros((0, self.k + 1), dtype=np.int64)
        tree = cKDTree(pts)
        if self.k == 1:
            centers = 0.5 * (pts[pairs[:, 0]] + pts[pairs[:, 1]])
            rad = 0.5 * dist
            occ = _open_ball_occupied(tree, centers, rad, pairs)
            return pairs[~occ]
        tri = _triangles(pairs, len(pts))
        keep = []
        cents, rads = [], []
        for t in tri:
            try:
                c, rad = circumsphere(pts[t])
                inside = in_open_convex_hull(c, pts[t])
            except DegeneracyError:
                continue
            if inside and _le(rad, self.r):
                keep.append(t)
                cents.append(c)
                rads.append(rad)
        if not keep:
            return np.zeros((0, 3), dtype=np.int64)
        keep = np.array(keep)
        occ = _open_ball_occupied(tree, np.array(cents), np.array(rads), keep)
        return keep[~occ]

    def _all_values(self, pts):
        out = np.zeros(len(pts))
        crit = self.critical_sets(pts)
        if len(crit):
            np.add.at(out, crit.ravel(), 1.0 / (self.k + 1))
        return out

    @property
    def fixed_radius(self):
        return 2.0 * self.r

    def describe(self):
        return {"score": self.tag, "k": self.k, "r": self.r}


def disk_nodes(count: int) -> np.ndarray:
    """Deterministic equal-area spiral nodes in the unit disk."""
    i = np.arange(count) + 0.5
    rad = np.sqrt(i / count)
    ang = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


@dataclass
class CoverageScore(Score):
    """Share of the k-covered region of the germ-grain model (d=2)."""

    k: int
    r: float
    nodes: int = 4096
    tag = "coverage"

    def values(self, pts, idx=None):
        pts = np.asarray(pts, dtype=float)
        idx = np.arange(len(pts)) if idx is None else np.asarray(idx)
        out = np.zeros(len(idx))
        if len(pts) == 0:
            return out
        tree = cKDTree(pts)
        base = disk_nodes(self.nodes) * self.r
        w = math.pi * self.r**2 / self.nodes
        for t, i in enumerate(idx):
            y = pts[i] + base
            c = tree.query_ball_point(y, self.r * (1.0 + REL_TOL), return_length=True)
            ok = c >= self.k
            out[t] = w * np.sum(1.0 / c[ok])
        return out

    @property
    def fixed_radius(self):
        return 2.0 * self.r

    def describe(self):
        return {"score": self.tag, "k": self.k, "r": self.r, "nodes": self.nodes}


def disk_intersection_measures(centers: np.ndarray, r: float) -> tuple[float, float]:
    """Area and perimeter of the intersection of equal-radius disks, from boundary arcs."""
    centers = np.atleast_2d(centers)
    m = len(centers)
    if m == 1:
        return math.pi * r * r, 2 * math.pi * r
    area2 = 0.0
    perim = 0.0
    for i in range(m):
        lo, hi = -math.inf, math.inf
        ok = True
        for j in range(m):
            if j == i:
                continue
            v = centers[j] - centers[i]
            dij = math.hypot(v[0], v[1])
            if dij > 2 * r:
                return 0.0, 0.0
            phi = math.atan2(v[1], v[0])
            alpha = math.acos(min(1.0, dij / (2 * r)))
            if math.isinf(lo):
                lo, hi = phi - alpha, phi + alpha
                continue
            mid = 0.5 * (lo + hi)
            phi = phi + 2 * math.pi * round((mid - phi) / (2 * math.pi))
            lo, hi = max(lo, phi - alpha), min(hi, phi + alpha)
            if hi <= lo:
                ok = False
                break
        if not ok:
            continue
        cx, cy = centers[i]
        area2 += r * r * (hi - lo) + r * (cx * (math.sin(hi) - math.sin(lo)) - cy * (math.cos(hi) - math.cos(lo)))
        perim += r * (hi - lo)
    return max(0.5 * area2, 0.0), perim


@dataclass
class IntrinsicVolumeScore(Score):
    """Inclusion-exclusion share of V_j of the union of radius-r disks (d=2)."""

    j: int
    r: float
    tag = "intrinsic_volume"

    def __post_init__(self):
        if self.j not in (0, 1, 2):
            raise ValueError("j must be 0, 1 or 2")

    def _measure(self, centers) -> float:
        if self.j == 0:
            return 1.0 if _le(miniball(centers)[1], self.r) else 0.0
        a, p = disk_intersection_measures(centers, self.r)
        return a if self.j == 2 else 0.5 * p

    def values(self, pts, idx=None):
        pts = np.asarray(pts, dtype=float)
        idx = np.arange(len(pts)) if idx is None else np.asarray(idx)
        out = np.zeros(len(idx))
        if len(pts) == 0:
            return out
        tree = cKDTree(pts)
        for t, i in enumerate(idx):
            nb = [q for q in sorted(tree.query_ball_point(pts[i], 2 * self.r * (1 + REL_TOL))) if q != i]
            out[t] = self._accumulate(pts, [i], nb)
        return out

    def _accumulate(self, pts, cur, cand) -> float:
        total = 0.0
        v = self._measure(pts[cur])
        if v == 0.0 and len(cur) > 1:
            return 0.0
        total += (-1) ** (len(cur) + 1) * v / len(cur)
        for a, q in enumerate(cand):
            if all(_le(np.linalg.norm(pts[q] - pts[c]), 2 * self.r) for c in cur):
                total += self._accumulate(pts, cur + [q], cand[a + 1:])
        return total

    @property
    def fixed_radius(self):
        return 2.0 * self.r

    def describe(self):
        return {"score": self.tag, "j": self.j, "r": self.r}


def knn_lists(pts: np.ndarray, k: int) -> list[np.ndarray]:
    """k nearest neighbours of every point, ties broken lexicographically by coordinates."""
    n = len(pts)
    kk = min(k, n - 1)
    if kk <= 0:
        return [np.zeros(0, dtype=np.int64) for _ in range(n)]
    tree = cKDTree(pts)
    q = min(kk + 2, n)
    dist, nb = tree.query(pts, q)
    dist, nb = dist.reshape(n, q), nb.reshape(n, q)
    # Column 0 is the point itself; the k-set is unambiguous when the next distance is larger.
    clear = np.full(n, True) if q == kk + 1 else dist[:, kk + 1] > dist[:, kk]
    fast = np.sort(nb[:, 1 : kk + 1], axis=1)
    out = []
    for i in range(n):
        if clear[i]:
            out.append(fast[i])
            continue
        dk = dist[i, kk] * (1.0 + 1e-12)
        cand = [c for c in tree.query_ball_point(pts[i], dk) if c != i]
        cand.sort(key=lambda c: (float(np.linalg.norm(pts[c] - pts[i])), *pts[c]))
        out.append(np.array(sorted(cand[:kk]), dtype=np.int64))
    return out


def knn_edges(pts: np.ndarray, k: int) -> np.ndarray:
    lists = knn_lists(pts, k)
    e = set()
    for i, nb in enumerate(lists):
        for j in nb:
            e.add((min(i, int(j)), max(i, int(j))))
    if not e:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(e), dtype=np.int64)


def sector_radius(x: np.ndarray, pts: np.ndarray, k: int) -> float:
    """Smallest t such that each of six equilateral triangles at x of side t holds k+1 points."""
    v = pts - x
    nz = np.any(v != 0, axis=1)
    v = v[nz]
    ang = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * math.pi)
    sec = np.minimum((ang // (math.pi / 3)).astype(int), 5)
    t = 0.0
    for j in range(6):
        w = v[sec == j]
        if len(w) < k + 1:
            return math.inf
        bis = (j + 0.5) * math.pi / 3
        proj = w[:, 0] * math.cos(bis) + w[:, 1] * math.sin(bis)
        pk = np.partition(proj, k)[k]
        t = max(t, pk * 2.0 / math.sqrt(3.0))
    return t


@dataclass
class KnnEdgeScore(Score):
    """Half the length of undirected k-NN edges at x (d=2 radius)."""

    k: int
    tag = "knn"

    def _all_values(self, pts):
        out = np.zeros(len(pts))
        e = knn_edges(pts, self.k)
        if len(e):
            ln = np.linalg.norm(pts[e[:, 0]] - pts[e[:, 1]], axis=1)
            np.add.at(out, e[:, 0], 0.5 * ln)
            np.add.at(out, e[:, 1], 0.5 * ln)
        return out

    def radius(self, pts, idx=None):
        pts = np.asarray(pts, dtype=float)
        idx = np.arange(len(pts)) if idx is None else np.asarray(idx)
        return np.array([4.0 * sector_radius(pts[i], pts, self.k) for i in idx])

    def describe(self):
        return {"score": self.tag, "k": self.k}


@dataclass
class TruncatedScore(Score):
    """xi * 1[R <= t]; its own radius never exceeds t."""

    base: Score
    t: float
    tag = "truncated"

    def values(self, pts, idx=None):
        v = self.base.values(pts, idx)
        rad = self.base.radius(pts, idx)
        return np.where(rad <= self.t, v, 0.0)

    @property
    def fixed_radius(self):
        return self.t


# --- statistics --------------------------------------------------------------


@dataclass
class WeightedMeasure:
    locations: np.ndarray
    weights: np.ndarray
    n: float

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def integral(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        if len(self.weights) == 0:
            return 0.0
        return float(np.sum(np.asarray(f(self.locations), dtype=float) * self.weights))


def total_statistic(score: Score, config: PointConfiguration) -> float:
    pts = config.points[config.in_window] if len(config) else config.points
    if len(pts) == 0:
        return 0.0
    return float(np.sum(score.values(pts)))


def overrun_count(score: Score, config: PointConfiguration, idx: np.ndarray) -> int:
    """Window points whose stabilization radius reaches past the sampled region."""
    if len(idx) == 0:
        return 0
    outer = config.buffer or config.window
    room = outer.distance_to_boundary(config.points[idx])
    rad = score.fixed_radius
    if rad is None:
        rad = score.radius(config.points, idx)
    return int(np.sum(np.broadcast_to(rad, room.shape) > room))


def buffered_statistic(score: Score, config: PointConfiguration) -> tuple[float, int]:
    """Window-point scores against the whole sampled configuration, plus the overrun count."""
    if len(config) == 0:
        return 0.0, 0
    idx = np.flatnonzero(config.in_window)
    if len(idx) == 0:
        return 0.0, 0
    vals = score.values(config.points, idx)
    return float(np.sum(vals)), overrun_count(score, config, idx)


def weighted_measure(score: Score, config: PointConfiguration) -> WeightedMeasure:
    pts = config.points[config.in_window] if len(config) else config.points
    w = score.values(pts) if len(pts) else np.zeros(0)
    scale = config.window.n ** (-1.0 / config.window.d)
    return WeightedMeasure(pts * scale, w, config.window.n)


def weighted_measure_integral(score: Score, config: PointConfiguration, f: Callable) -> float:
    return weighted_measure(score, config).integral(f)
