"""Set-partition combinatorics, cumulant ladders and CLT diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

MAX_EXACT_ORDER = 6
MAX_LADDER_ORDER = 4


def set_partitions(items: Sequence) -> list[list[list]]:
    items = list(items)
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for part in set_partitions(rest):
        out.append([[first]] + part)
        for i in range(len(part)):
            out.append(part[:i] + [[first] + part[i]] + part[i + 1:])
    return out


def mobius_weight(blocks: int) -> int:
    if blocks == 0:
        return 1
    return (-1) ** (blocks - 1) * math.factorial(blocks - 1)


@dataclass(frozen=True)
class PartitionTable:
    k: int
    partitions: tuple
    weights: tuple

    def __len__(self) -> int:
        return len(self.partitions)


@lru_cache(maxsize=None)
def partition_table(k: int) -> PartitionTable:
    if not 0 <= k <= MAX_EXACT_ORDER:
        raise ValueError(f"order {k} outside 0..{MAX_EXACT_ORDER}")
    parts = set_partitions(range(1, k + 1))
    parts = tuple(tuple(tuple(sorted(b)) for b in sorted(p, key=min)) for p in parts)
    return PartitionTable(k, parts, tuple(mobius_weight(len(p)) for p in parts))


def cumulants_from_moments(moments: Sequence[float]) -> np.ndarray:
    """Raw moments M_1..M_k to cumulants S_1..S_k by the partition Mobius sum."""
    m = [float(x) for x in moments]
    k = len(m)
    if k > MAX_EXACT_ORDER:
        raise ValueError(f"order {k} exceeds {MAX_EXACT_ORDER}")
    out = np.zeros(k)
    for j in range(1, k + 1):
        tab = partition_table(j)
        out[j - 1] = sum(w * math.prod(m[len(b) - 1] for b in p) for p, w in zip(tab.partitions, tab.weights))
    return out


def moments_from_cumulants(cums: Sequence[float]) -> np.ndarray:
    c = [float(x) for x in cums]
    k = len(c)
    if k > MAX_EXACT_ORDER:
        raise ValueError(f"order {k} exceeds {MAX_EXACT_ORDER}")
    return np.array([sum(math.prod(c[len(b) - 1] for b in p) for p in partition_table(j).partitions) for j in range(1, k + 1)])


def ursell_from_correlations(oracle: Callable[[list], float], points: Sequence, exponents: Sequence[int] | None = None) -> float:
    """Truncated correlation of p points: Mobius sum of block correlations.

    ``oracle`` receives a list of ``(point, exponent)`` pairs for one block.
    """
    p = len(points)
    if p > MAX_EXACT_ORDER:
        raise ValueError(f"p={p} exceeds {MAX_EXACT_ORDER}")
    exps = list(exponents) if exponents is not None else [1] * p
    tab = partition_table(p)
    total = 0.0
    for part, w in zip(tab.partitions, tab.weights):
        term = float(w)
        for block in part:
            term *= oracle([(points[i - 1], exps[i - 1]) for i in block])
        total += term
    return total


def determinantal_oracle(kernel_matrix: Callable[[np.ndarray], np.ndarray]) -> Callable[[list], float]:
    """Block correlation for xi = 1 on a determinantal input: det of the kernel matrix."""

    def oracle(block):
        pts = np.array([np.asarray(x, dtype=float) for x, _ in block])
        return float(np.real(np.linalg.det(kernel_matrix(pts))))

    return oracle


def determinantal_truncated_cyclic(kernel_matrix: Callable[[np.ndarray], np.ndarray], points) -> float:
    """(-1)^(p-1) times the sum over cyclic permutations of kernel products."""
    import itertools

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = len(pts)
    k = kernel_matrix(pts)
    if p == 1:
        return float(np.real(k[0, 0]))
    total = 0.0
    for rest in itertools.permutations(range(1, p)):
        cyc = (0,) + rest
        prod = 1.0 + 0j
        for a in range(p):
            prod *= k[cyc[a], cyc[(a + 1) % p]]
        total += prod
    return float(np.real((-1) ** (p - 1) * total))


@dataclass
class DecayScan:
    diameters: np.ndarray
    envelope: np.ndarray

    def monotone_beyond(self, s0: float) -> bool:
        sel = self.envelope[self.diameters >= s0]
        return bool(np.all(np.diff(sel) <= 0))


def _spread_configs(p: int, s: float, trials: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Configurations of p planar points with diameter exactly s (first two points realize it)."""
    base = np.array([[0.0, 0.0], [s, 0.0]])
    out = []
    if p == 2:
        return [base]
    # Deterministic member: remaining points on the segment's midpoint region.
    mids = np.linspace(0.5 - 0.05 * (p - 3), 0.5 + 0.05 * (p - 3), p - 2)
    out.append(np.vstack([base, np.column_stack([mids * s, np.zeros(p - 2)])]))
    while len(out) < trials:
        cand = rng.uniform([0.0, -s], [s, s], size=(p - 2, 2))
        pts = np.vstack([base, cand])
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        if d.max() <= s * (1 + 1e-12):
            out.append(pts)
    return out


def ursell_decay_scan(oracle: Callable[[list], float], p: int, diameters: Sequence[float], trials: int = 64, seed: int = 0) -> DecayScan:
    """Max |truncated correlation| over configurations of each diameter."""
    rng = np.random.default_rng(seed)
    env = []
    for s in diameters:
        vals = [abs(ursell_from_correlations(oracle, list(c))) for c in _spread_configs(p, float(s), trials, rng)]
        env.append(max(vals))
    return DecayScan(np.asarray(diameters, dtype=float), np.asarray(env))


# --- Monte Carlo cumulants ---------------------------------------------------


def kstat(values: np.ndarray, k: int) -> float:
    return float(stats.kstat(np.asarray(values, dtype=float), k))


def kstat_jackknife(values: np.ndarray, k: int) -> tuple[float, float]:
    """k-statistic with a delete-one jackknife standard error, via power sums."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    x = x - x.mean()  # k-statistics of order >= 2 are shift invariant
    full = kstat(x, k)
    if k == 1:
        return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n))
    sums = [np.sum(x**j) for j in range(1, 5)]
    m = n - 1
    loo = np.empty(n)
    for i in range(n):
        s1, s2, s3, s4 = (sums[j - 1] - x[i] ** j for j in range(1, 5))
        loo[i] = _kstat_from_sums(k, m, s1, s2, s3, s4)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return full, se


def _kstat_from_sums(k, n, s1, s2, s3, s4):
    if k == 2:
        return (n * s2 - s1 * s1) / (n * (n - 1))
    if k == 3:
        return (2 * s1**3 - 3 * n * s1 * s2 + n * n * s3) / (n * (n - 1) * (n - 2))
    if k == 4:
        num = -6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2 - 4 * n * (n + 1) * s1 * s3 + n * n * (n + 1) * s4
        return num / (n * (n - 1) * (n - 2) * (n - 3))
    raise ValueError("k must be 2, 3 or 4")


def power_law_fit(ns: Sequence[float], values: Sequence[float], stderr: Sequence[float]) -> tuple[float, float, float]:
    """Weighted fit of values = c * n^b; returns (b, stderr of b, c)."""
    ns = np.asarray(ns, dtype=float)
    y = np.asarray(values, dtype=float)
    se = np.asarray(stderr, dtype=float)
    se = np.where(se > 0, se, np.max(np.abs(y)) * 1e-6 + 1e-300)
    pos = y > 0
    if pos.sum() >= 2:
        b0, a0 = np.polyfit(np.log(ns[pos]), np.log(y[pos]), 1)
    else:
        b0, a0 = 1.0, math.log(max(abs(y).max(), 1e-300))
    ref = ns[0]

    def model(n, logc, b):
        return np.exp(logc) * (n / ref) ** b

    try:
        popt, pcov = optimize.curve_fit(model, ns, y, p0=[a0 + b0 * math.log(ref), b0], sigma=se, absolute_sigma=True, maxfev=20000)
    except RuntimeError:
        return float(b0), math.nan, math.exp(a0)
    return float(popt[1]), float(math.sqrt(max(pcov[1, 1], 0.0))), float(math.exp(popt[0]) * ref ** (-popt[1]))


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


@dataclass
class CumulantLadder:
    ns: list[float]
    values: dict[float, np.ndarray]
    estimates: dict[int, np.ndarray] = field(default_factory=dict)
    stderrs: dict[int, np.ndarray] = field(default_factory=dict)

    def slope(self, k: int) -> tuple[float, float]:
        b, se, _ = power_law_fit(self.ns, self.estimates[k], self.stderrs[k])
        return b, se

    def normalized(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """S_k / S_2^(k/2) with jackknife standard errors."""
        out, err = [], []
        for n in self.ns:
            v = self.values[n]
            val = _std_cumulant(v, k)
            reps = len(v)
            loo = _std_cumulant_loo(v, k)
            out.append(val)
            err.append(math.sqrt((reps - 1) / reps * np.sum((loo - loo.mean()) ** 2)))
        return np.array(out), np.array(err)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "k", "S_k", "stderr", "slope_so_far"])
            for k in sorted(self.estimates):
                for i, n in enumerate(self.ns):
                    slope = self.slope_prefix(k, i + 1) if i >= 1 else math.nan
                    w.writerow([n, k, repr(float(self.estimates[k][i])), repr(float(self.stderrs[k][i])), repr(float(slope))])

    def slope_prefix(self, k: int, upto: int) -> float:
        return power_law_fit(self.ns[:upto], self.estimates[k][:upto], self.stderrs[k][:upto])[0]


def _std_cumulant(v: np.ndarray, k: int) -> float:
    return kstat(v, k) / kstat(v, 2) ** (k / 2)


def _std_cumulant_loo(v: np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(v, dtype=float) - np.mean(v)
    sums = [np.sum(x**j) for j in range(1, 5)]
    m = len(x) - 1
    out = np.empty(len(x))
    for i in range(len(x)):
        s = [sums[j - 1] - x[i] ** j for j in range(1, 5)]
        out[i] = _kstat_from_sums(k, m, *s) / _kstat_from_sums(2, m, *s) ** (k / 2)
    return out


def cumulant_ladder_from_values(values: dict[float, Sequence[float]], kmax: int = 3) -> CumulantLadder:
    if kmax > MAX_LADDER_ORDER:
        raise ValueError(f"ladder order capped at {MAX_LADDER_ORDER}")
    ns = sorted(values)
    for n in ns:
        need = 2000 if kmax >= 4 else 500 if kmax == 3 else 2
        if len(values[n]) < need:
            raise ValueError(f"need >= {need} replicates for k={kmax}, got {len(values[n])} at n={n}")
    lad = CumulantLadder(ns, {n: np.asarray(values[n], dtype=float) for n in ns})
    for k in range(1, kmax + 1):
        est, err = zip(*(kstat_jackknife(lad.values[n], k) for n in ns))
        lad.estimates[k] = np.array(est)
        lad.stderrs[k] = np.array(err)
    return lad


def estimate_cumulant_ladder(draw: Callable[[float, int], float], ladder: Sequence[float], replicates: int, kmax: int = 3) -> CumulantLadder:
    """Run ``draw(n, replicate)`` over the ladder, then form k-statistics per n."""
    vals = {float(n): [draw(n, i) for i in range(replicates)] for n in ladder}
    return cumulant_ladder_from_values(vals, kmax)


@dataclass
class CLTReport:
    skewness: float
    excess_kurtosis: float
    ks_statistic: float
    ks_pvalue: float
    replicates: int


def clt_diagnostics(values: Sequence[float], min_replicates: int = 1000) -> CLTReport:
    x = np.asarray(values, dtype=float)
    if len(x) < min_replicates:
        raise ValueError(f"need at least {min_replicates} replicates")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValueError("degenerate sample")
    z = (x - x.mean()) / sd
    ks = stats.kstest(z, "norm")
    return CLTReport(float(stats.skew(x, bias=False)), float(stats.kurtosis(x, fisher=True, bias=False)),
                     float(ks.statistic), float(ks.pvalue), len(x))
