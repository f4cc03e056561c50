"""Mixed-moment estimation, plug-in limit variances and the factorization diagnostic."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Window, set_covariance
from .processes import PointConfiguration
from .scores import Score, overrun_count


@dataclass
class ScoredSample:
    """Window points of one replicate with scores evaluated against the sampled input."""

    points: np.ndarray
    values: np.ndarray
    window: Window
    overruns: int = 0

    @property
    def n(self) -> float:
        return self.window.n

    @property
    def total(self) -> float:
        return float(np.sum(self.values))


def score_sample(score: Score, config: PointConfiguration) -> ScoredSample:
    idx = np.flatnonzero(config.in_window) if len(config) else np.zeros(0, dtype=int)
    vals = score.values(config.points, idx) if len(idx) else np.zeros(0)
    over = overrun_count(score, config, idx)
    return ScoredSample(config.points[idx], np.asarray(vals, dtype=float), config.window, over)


def estimate_m1(samples: Sequence[ScoredSample], min_replicates: int = 30) -> tuple[float, float]:
    """Mean of H-hat / n over replicates and its standard error."""
    if len(samples) < min_replicates:
        raise ValueError(f"need at least {min_replicates} replicates, got {len(samples)}")
    v = np.array([s.total / s.n for s in samples])
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


@dataclass
class MomentEstimate:
    m1: float
    m1_se: float
    second: float
    edges: np.ndarray
    m2: np.ndarray
    m2_se: np.ndarray
    counts: np.ndarray
    # per-replicate pieces, kept for jackknife errors of derived integrals
    rep_m1: np.ndarray
    rep_second: np.ndarray
    rep_m2: np.ndarray

    @property
    def s_mid(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def empty_bins(self) -> np.ndarray:
        return self.counts == 0

    @property
    def shell_areas(self) -> np.ndarray:
        return math.pi * (self.edges[1:] ** 2 - self.edges[:-1] ** 2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s_mid", "m2", "stderr", "count"])
            for s, m, e, c in zip(self.s_mid, self.m2, self.m2_se, self.counts):
                w.writerow([repr(float(s)), repr(float(m)), repr(float(e)), int(c)])


def estimate_m2_radial(samples: Sequence[ScoredSample], delta: float, smax: float, min_replicates: int = 2) -> MomentEstimate:
    """Radial profile of the second mixed moment density with translation edge correction (d=2)."""
    if delta <= 0 or smax <= 0:
        raise ValueError("delta and smax must be positive")
    if len(samples) < min_replicates:
        raise ValueError("not enough replicates")
    nb = int(math.ceil(smax / delta - 1e-12))
    edges = np.arange(nb + 1) * delta
    area = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    reps = len(samples)
    rep_m2 = np.zeros((reps, nb))
    counts = np.zeros(nb, dtype=np.int64)
    rep_m1 = np.zeros(reps)
    rep_second = np.zeros(reps)
    for i, s in enumerate(samples):
        rep_m1[i] = s.total / s.n
        rep_second[i] = float(np.sum(s.values**2)) / s.n
        if len(s.points) < 2:
            continue
        p = cKDTree(s.points).query_pairs(edges[-1], output_type="ndarray")
        if len(p) == 0:
            continue
        z = s.points[p[:, 1]] - s.points[p[:, 0]]
        dist = np.linalg.norm(z, axis=1)
        b = np.minimum((dist / delta).astype(int), nb - 1)
        ok = dist < edges[-1]
        w = 2.0 * s.values[p[:, 0]] * s.values[p[:, 1]] / set_covariance(s.window, z)
        rep_m2[i] = np.bincount(b[ok], weights=w[ok], minlength=nb) / area
        counts += np.bincount(b[ok], minlength=nb)
    m1 = float(rep_m1.mean())
    m1_se = float(rep_m1.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    m2 = rep_m2.mean(axis=0)
    m2_se = rep_m2.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(nb, math.nan)
    return MomentEstimate(m1, m1_se, float(rep_second.mean()), edges, m2, m2_se, counts, rep_m1, rep_second, rep_m2)


def _jackknife(stat, *arrays) -> tuple[float, float]:
    """Delete-one jackknife of ``stat(means...)`` over the leading replicate axis."""
    reps = len(arrays[0])
    means = [a.mean(axis=0) for a in arrays]
    full = stat(*means)
    loo = np.array([stat(*[(reps * m - a[i]) / (reps - 1) for m, a in zip(means, arrays)]) for i in range(reps)])
    se = math.sqrt((reps - 1) / reps * np.sum((loo - loo.mean()) ** 2))
    return float(full), se


@dataclass
class SigmaEstimate:
    value: float
    stderr: float
    tail: float
    tail_se: float


def _tail(est: MomentEstimate) -> tuple[float, float]:
    q = max(1, len(est.m2) // 4)
    dev = est.rep_m2[:, -q:].mean(axis=1) - est.rep_m1**2
    return float(dev.mean()), float(dev.std(ddof=1) / math.sqrt(len(dev)))


def check_tail(est: MomentEstimate, rel_tol: float = 0.02) -> None:
    dev, se = _tail(est)
    if abs(dev) > 3 * se + rel_tol * est.m1**2:
        raise ValueError(f"profile tail not converged: m2 - m1^2 = {dev:.3g} +- {se:.2g}")


def sigma_sq_plugin(est: MomentEstimate, second: float | None = None, strict: bool = True) -> SigmaEstimate:
    """E0 xi^2 rho plus the shell integral of (m2 - m1^2) over the profile range."""
    if strict:
        check_tail(est)
    area = est.shell_areas

    def stat(sec, m1, m2):
        return sec + float(np.sum((m2 - m1 * m1) * area))

    val, se = _jackknife(stat, est.rep_second, est.rep_m1, est.rep_m2)
    if second is not None:
        val += second - est.second
    tail, tail_se = _tail(est)
    return SigmaEstimate(val, se, tail, tail_se)


def sigma_sq_surface(est: MomentEstimate, strict: bool = True) -> SigmaEstimate:
    """Shell integral of (m1^2 - m2(s)) weighted by the angular mean of the cube limit overlap."""
    if strict:
        check_tail(est)
    e = est.edges
    wts = 8.0 / 3.0 * (e[1:] ** 3 - e[:-1] ** 3)

    def stat(m1, m2):
        return float(np.sum((m1 * m1 - m2) * wts))

    val, se = _jackknife(stat, est.rep_m1, est.rep_m2)
    tail, tail_se = _tail(est)
    return SigmaEstimate(val, se, tail, tail_se)


@dataclass
class DecayCurve:
    s: np.ndarray
    error: np.ndarray
    stderr: np.ndarray
    envelope: np.ndarray


def factorization_error_curve(est: MomentEstimate) -> DecayCurve:
    """|m2(s) - m1^2| with standard errors and its non-increasing upper envelope."""
    err = np.abs(est.m2 - est.m1**2)
    env = np.maximum.accumulate(err[::-1])[::-1]
    return DecayCurve(est.s_mid, err, est.m2_se, env)
