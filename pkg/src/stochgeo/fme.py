"""Factorial moment expansion machinery for Poisson input and U-statistic scores."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Window
from .scores import Score

Functional = Callable[[np.ndarray], float]
MAX_DIFFERENCE_ORDER = 12


def polar_key(p) -> tuple:
    """Sort key of the order: radius first, then angle in [0, 2pi) (d=2), sign (d=1) or polar/azimuth (d=3)."""
    p = np.asarray(p, dtype=float).ravel()
    r = float(np.linalg.norm(p))
    if p.size == 1:
        return (r, 0.0 if p[0] >= 0 else math.pi)
    if p.size == 2:
        return (r, math.atan2(p[1], p[0]) % (2 * math.pi))
    theta = math.acos(max(-1.0, min(1.0, p[2] / r))) if r > 0 else 0.0
    return (r, theta, math.atan2(p[1], p[0]) % (2 * math.pi))


def precedes(a, b) -> bool:
    return polar_key(a) < polar_key(b)


def sort_by_order(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return pts
    return pts[sorted(range(len(pts)), key=lambda i: polar_key(pts[i]))]


def restrict_below(points, x) -> np.ndarray:
    """Points strictly preceding ``x``."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return pts
    kx = polar_key(x)
    keep = [i for i in range(len(pts)) if polar_key(pts[i]) < kx]
    return pts[keep]


def _stack(mu: np.ndarray, ys: np.ndarray, dim: int) -> np.ndarray:
    if len(ys) == 0:
        return mu.reshape(-1, dim)
    return np.vstack([mu.reshape(-1, dim), ys.reshape(-1, dim)])


def difference_kernel(psi: Functional, ys, mu=None) -> float:
    """Subset-sum form of the l-th difference of ``psi`` at ``mu``, base restricted below min(ys)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    dim = ys.shape[1]
    mu = np.zeros((0, dim)) if mu is None else np.asarray(mu, dtype=float).reshape(-1, dim)
    l = len(ys)
    if l == 0:
        return float(psi(mu))
    if l > MAX_DIFFERENCE_ORDER:
        raise ValueError(f"order {l} exceeds {MAX_DIFFERENCE_ORDER}")
    if l > 1:
        gaps = np.abs(ys[:, None, :] - ys[None, :, :]).max(axis=2)
        if np.any(gaps[np.triu_indices(l, 1)] == 0):
            raise ValueError("duplicate arguments")
    base = restrict_below(mu, min(ys, key=polar_key)) if len(mu) else mu
    total = 0.0
    for size in range(l + 1):
        sign = (-1) ** (l - size)
        for sub in itertools.combinations(range(l), size):
            total += sign * psi(_stack(base, ys[list(sub)], dim))
    return total


def iterated_difference(psi: Functional, ys, mu=None) -> float:
    """Recursive one-point differences for arguments sorted in descending order."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    dim = ys.shape[1]
    mu = np.zeros((0, dim)) if mu is None else np.asarray(mu, dtype=float).reshape(-1, dim)
    order = sorted(range(len(ys)), key=lambda i: polar_key(ys[i]), reverse=True)
    ys = ys[order]

    def d(level: int, nu: np.ndarray) -> float:
        if level == 0:
            return float(psi(nu))
        x = ys[level - 1]
        below = restrict_below(nu, x)
        return d(level - 1, _stack(below, x[None], dim)) - d(level - 1, below)

    return d(len(ys), mu)


def fme_vanishing_check(psi: Functional, ys, mu=None, tol: float = 1e-12) -> bool:
    return abs(difference_kernel(psi, ys, mu)) <= tol


def palm_functional(score: Score, anchors, exponents: Sequence[int]) -> Functional:
    """psi(mu) = prod_i xi(x_i, mu + anchors)^k_i."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    exps = list(exponents)

    def psi(mu: np.ndarray) -> float:
        pts = np.vstack([anchors, np.asarray(mu, dtype=float).reshape(-1, anchors.shape[1])])
        vals = score.values(pts, np.arange(len(anchors)))
        return float(np.prod(vals ** np.asarray(exps)))

    return psi


def fme_order_bound(k: int, exponents: Sequence[int]) -> int:
    return (k - 1) * int(sum(exponents))


def u_statistic(f: Callable, k: int, points) -> float:
    """(1/k!) times the sum of f over ordered k-tuples of distinct points."""
    pts = np.asarray(points, dtype=float)
    total = 0.0
    for tup in itertools.permutations(range(len(pts)), k):
        total += f(*pts[list(tup)])
    return total / math.factorial(k)


def product_expansion(f: Callable, k: int, g: Callable, l: int, points) -> float:
    """F*G rewritten as a sum of U-statistics of orders max(k,l)..k+l (f, g symmetric)."""
    pts = np.asarray(points, dtype=float)
    total = 0.0
    for m in range(max(k, l), k + l + 1):
        c = math.factorial(k + l - m) * math.factorial(m - k) * math.factorial(m - l)
        for tup in itertools.permutations(range(len(pts)), m):
            z = pts[list(tup)]
            total += f(*z[:k]) * g(*z[m - l:]) / c
    return total


@dataclass
class FMEResult:
    fme: float
    fme_se: float
    direct: float
    direct_se: float
    terms: list
    samples: int

    @property
    def relative_gap(self) -> float:
        return abs(self.fme - self.direct) / abs(self.direct)


def fme_truncated_expectation(psi: Functional, order: int, lam: float, window: Window, support: Window | None,
                              samples: int, rng: np.random.Generator) -> FMEResult:
    """Compare the truncated FME with direct Poisson Monte Carlo using common random numbers.

    ``support`` is a box inside ``window`` outside of which every difference
    kernel of order >= 1 vanishes; the integrals are sampled on it.
    """
    if lam <= 0:
        raise ValueError("intensity must be positive")
    if window.volume > 4 + 1e-12 or lam > 5:
        raise ValueError("FME check is meant for small windows (volume <= 4) and lam <= 5")
    box = support or window
    d = window.d
    vb = box.volume
    vrest = window.volume - vb
    base_val = float(psi(np.zeros((0, d))))
    direct = np.empty(samples)
    terms = np.zeros((samples, order + 1))
    terms[:, 0] = base_val
    for s in range(samples):
        nb = rng.poisson(lam * vb)
        ys = rng.uniform(-box.half, box.half, size=(max(nb, order), d))
        nr = rng.poisson(lam * vrest) if vrest > 0 else 0
        rest = []
        while len(rest) < nr:
            c = rng.uniform(-window.half, window.half, size=(2 * nr, d))
            c = c[~box.contains(c)]
            rest.extend(c[: nr - len(rest)])
        conf = np.vstack([ys[:nb]] + ([np.array(rest)] if nr else []))
        direct[s] = psi(conf)
        for l in range(1, order + 1):
            terms[s, l] = difference_kernel(psi, ys[:l]) * (lam * vb) ** l / math.factorial(l)
    tot = terms.sum(axis=1)
    return FMEResult(float(tot.mean()), float(tot.std(ddof=1) / math.sqrt(samples)),
                     float(direct.mean()), float(direct.std(ddof=1) / math.sqrt(samples)),
                     list(terms.mean(axis=0)), samples)
