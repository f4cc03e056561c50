"""Windows, spatial queries and the small exact geometry kernels used by scores."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

PIVOT_TOL = 1e-12


class DegeneracyError(ValueError):
    """Raised when a geometric construction has no unique answer."""


@dataclass(frozen=True)
class Window:
    """Centered cube of volume ``n`` in dimension ``d``."""

    n: float
    d: int

    @property
    def side(self) -> float:
        return float(self.n) ** (1.0 / self.d)

    @property
    def half(self) -> float:
        return 0.5 * self.side

    @property
    def bounds(self) -> np.ndarray:
        h = self.half
        return np.array([[-h, h]] * self.d)

    @property
    def volume(self) -> float:
        return self.side**self.d

    @property
    def circumradius(self) -> float:
        return self.half * np.sqrt(self.d)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all(np.abs(pts) <= self.half, axis=1)

    def enlarged(self, margin: float) -> "Window":
        side = self.side + 2.0 * margin
        return Window(side**self.d, self.d)

    def distance_to_boundary(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.min(self.half - np.abs(pts), axis=1)


def build_window(n: float, d: int) -> Window:
    if not np.isfinite(n) or n <= 0:
        raise ValueError(f"window volume must be positive, got {n}")
    if d not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {d}")
    return Window(float(n), int(d))


@dataclass
class SpatialIndex:
    """Range-query index over a fixed point array.

    Backed by a k-d tree; ``cell_size`` is kept only as a hint for callers
    that size their queries.
    """

    points: np.ndarray
    cell_size: float = 1.0
    tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def ball(self, x, r: float) -> np.ndarray:
        """Indices of points within closed distance ``r`` of ``x`` (x itself included)."""
        if self.tree is None:
            return np.zeros(0, dtype=int)
        idx = self.tree.query_ball_point(np.asarray(x, dtype=float), r)
        return np.asarray(sorted(idx), dtype=int)

    def pairs(self, r: float) -> np.ndarray:
        """All index pairs (i < j) at distance at most ``r``, sorted."""
        if self.tree is None or len(self.points) < 2:
            return np.zeros((0, 2), dtype=int)
        p = self.tree.query_pairs(r, output_type="ndarray")
        if len(p) == 0:
            return np.zeros((0, 2), dtype=int)
        p = np.sort(p, axis=1)
        order = np.lexsort((p[:, 1], p[:, 0]))
        return p[order]


def neighbors_within(index: SpatialIndex, x, r: float) -> np.ndarray:
    """Points ``y != x`` with ``|y - x| <= r``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    x = np.asarray(x, dtype=float)
    idx = index.ball(x, r)
    pts = index.points[idx]
    keep = np.any(pts != x, axis=1)
    return pts[keep]


def circumsphere(points) -> tuple[np.ndarray, float]:
    """Center and radius of the smallest sphere through affinely independent points.

    The center lies in the affine hull of the input.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(p)
    if m == 0:
        raise ValueError("empty input")
    if m == 1:
        return p[0].copy(), 0.0
    if m > p.shape[1] + 1:
        raise DegeneracyError("more than d+1 points")
    a = p[1:] - p[0]
    gram = a @ a.T
    rhs = 0.5 * np.diag(gram)
    scale = max(np.max(np.abs(gram)), 1e-300)
    # Gram determinant relative to scale^k flags (near) affine dependence.
    det = np.linalg.det(gram / scale)
    if abs(det) < PIVOT_TOL:
        raise DegeneracyError("points are affinely dependent")
    lam = np.linalg.solve(gram, rhs)
    center = p[0] + lam @ a
    radius = float(np.max(np.linalg.norm(p - center, axis=1)))
    return center, radius


def _in_ball(c, r, q, eps=1e-9):
    return np.linalg.norm(q - c) <= r + eps * max(1.0, r)


def miniball(points) -> tuple[np.ndarray, float]:
    """Smallest enclosing ball by exhaustive support enumeration.

    Intended for the small sets that arise as simplices (at most a handful
    of points); cost grows combinatorially with the input size.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.size == 0 or len(p) == 0:
        raise ValueError("empty input")
    p = np.unique(p, axis=0)
    m, d = p.shape
    if m == 1:
        return p[0].copy(), 0.0
    best_c, best_r = None, np.inf
    for size in range(2, min(m, d + 1) + 1):
        for sub in itertools.combinations(range(m), size):
            try:
                c, r = circumsphere(p[list(sub)])
            except DegeneracyError:
                continue
            if r >= best_r:
                continue
            if all(_in_ball(c, r, q) for q in p):
                best_c, best_r = c, r
    if best_c is None:
        raise DegeneracyError("no enclosing ball found")
    return best_c, float(best_r)


def miniball_radius_triangles(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Vectorized miniball radius for triangles given as (m, d) arrays."""
    la = np.sum((b - c) ** 2, axis=1)
    lb = np.sum((a - c) ** 2, axis=1)
    lc = np.sum((a - b) ** 2, axis=1)
    longest = np.maximum(np.maximum(la, lb), lc)
    obtuse = 2.0 * longest >= la + lb + lc
    u, v = b - a, c - a
    area2 = np.sqrt(np.clip(np.sum(u * u, 1) * np.sum(v * v, 1) - np.sum(u * v, 1) ** 2, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        circ = np.sqrt(la * lb * lc) / (2.0 * area2)
    return np.where(obtuse, 0.5 * np.sqrt(longest), circ)


def barycentric(c, points) -> np.ndarray:
    """Barycentric coordinates of ``c`` with respect to a k-simplex in R^d."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.asarray(c, dtype=float)
    a = (p[1:] - p[0]).T
    gram = a.T @ a
    scale = max(np.max(np.abs(gram)), 1e-300)
    if abs(np.linalg.det(gram / scale)) < PIVOT_TOL:
        raise DegeneracyError("hull is degenerate")
    lam = np.linalg.solve(gram, a.T @ (c - p[0]))
    resid = p[0] + a @ lam - c
    if np.linalg.norm(resid) > 1e-9 * max(1.0, np.linalg.norm(c)):
        # c is off the affine hull; no relative-interior membership possible.
        return np.full(len(p), -np.inf)
    return np.concatenate([[1.0 - lam.sum()], lam])


def in_open_convex_hull(c, points, tol: float = 1e-12) -> bool:
    """Whether ``c`` lies in the relative interior of the hull of a k-simplex."""
    w = barycentric(c, points)
    return bool(np.all(w > tol))


def boundary_overlap(window: Window, y) -> float:
    """Volume of the part of ``W`` that the shift ``W + y`` does not cover.

    Computed as ``Vol(W) - Vol(W ∩ (W - y))`` for the centered cube.
    """
    y = np.abs(np.atleast_1d(np.asarray(y, dtype=float)))
    a = window.side
    return float(a**window.d - np.prod(np.clip(a - y, 0.0, None)))


def set_covariance(window: Window, z) -> np.ndarray:
    """``Vol(W ∩ (W - z))`` for each row of ``z``."""
    z = np.abs(np.atleast_2d(np.asarray(z, dtype=float)))
    return np.prod(np.clip(window.side - z, 0.0, None), axis=1)


def gamma_limit(y) -> float:
    """Scaled limit of the boundary overlap for growing cubes: ``sum |y_i|``."""
    return float(np.sum(np.abs(np.asarray(y, dtype=float))))


def gamma_angular_mean_2d(s: float) -> float:
    """Average of ``|y_1| + |y_2|`` over the circle of radius ``s``."""
    return 4.0 * s / np.pi
