"""Point-process samplers, kernels and exact correlation formulas."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .geometry import Window, build_window

GINIBRE_SCALE = 1.0 / math.sqrt(math.pi)
MAX_GINIBRE_N = 8000


class ResourceError(RuntimeError):
    """A sampler would exceed a configured size cap."""


@dataclass(frozen=True)
class RngStream:
    """Reproducible generator keyed by ``(seed, stream)`` plus optional sub-keys."""

    seed: int
    stream: int = 0

    def generator(self, *subkeys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),) + tuple(int(k) for k in subkeys))
        return np.random.default_rng(ss)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


@dataclass
class PointConfiguration:
    points: np.ndarray
    window: Window
    buffer: Window | None = None
    process: str = ""
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.window.d)
        outer = self.buffer or self.window
        if len(self.points) and not np.all(outer.contains(self.points)):
            raise ValueError("points outside the sampled region")
        if len(self.points) > 1:
            u = np.unique(self.points, axis=0)
            if len(u) != len(self.points):
                raise ValueError("duplicate points in configuration")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def in_window(self) -> np.ndarray:
        return self.window.contains(self.points) if len(self.points) else np.zeros(0, bool)

    def restricted(self) -> "PointConfiguration":
        return PointConfiguration(self.points[self.in_window], self.window, None, self.process, dict(self.params), self.seed)

    def to_text(self) -> str:
        lines = [f"{self.window.d} {self.window.n!r} {self.seed if self.seed is not None else -1} {self.process or 'unknown'}"]
        for p in self.points:
            lines.append(" ".join(f"{v:.17g}" for v in p))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PointConfiguration":
        rows = [ln.split() for ln in text.strip().splitlines()]
        d, n, seed, proc = int(rows[0][0]), float(rows[0][1]), int(rows[0][2]), rows[0][3]
        pts = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, d)
        win = build_window(n, d)
        buf = None
        if len(pts) and not np.all(win.contains(pts)):
            m = float(np.max(np.abs(pts))) - win.half
            buf = win.enlarged(m * (1 + 1e-12) + 1e-12)
        return cls(pts, win, buf, proc, {}, None if seed < 0 else seed)


def _region(window: Window, buffer: Window | None) -> Window:
    return buffer if buffer is not None else window


def _uniform_in_cube(rng, half: float, d: int, count: int) -> np.ndarray:
    return rng.uniform(-half, half, size=(count, d))


# --- Poisson ---------------------------------------------------------------


def sample_poisson(window: Window, intensity: float, rng, buffer: Window | None = None) -> PointConfiguration:
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    rng = _as_rng(rng)
    reg = _region(window, buffer)
    count = rng.poisson(intensity * reg.volume)
    pts = _uniform_in_cube(rng, reg.half, reg.d, count)
    return PointConfiguration(pts, window, buffer, "poisson", {"intensity": intensity})


# --- Matern ----------------------------------------------------------------


def sample_matern2(window: Window, lam_p: float, h: float, rng, buffer: Window | None = None) -> PointConfiguration:
    """Matern II hard-core thinning; proposals cover the region dilated by ``h``."""
    from scipy.spatial import cKDTree

    if lam_p <= 0 or h < 0:
        raise ValueError("need lam_p > 0 and h >= 0")
    rng = _as_rng(rng)
    reg = _region(window, buffer)
    ext = reg.enlarged(h)
    count = rng.poisson(lam_p * ext.volume)
    pts = _uniform_in_cube(rng, ext.half, reg.d, count)
    marks = rng.uniform(size=count)
    keep = np.ones(count, dtype=bool)
    if h > 0 and count > 1:
        pairs = cKDTree(pts).query_pairs(h, output_type="ndarray")
        if len(pairs):
            i, j = pairs[:, 0], pairs[:, 1]
            loser = np.where(marks[i] > marks[j], i, j)
            keep[loser] = False
    pts = pts[keep]
    pts = pts[reg.contains(pts)]
    return PointConfiguration(pts, window, buffer, "matern2", {"lam_p": lam_p, "h": h})


def matern2_intensity(lam_p: float, h: float, d: int = 2) -> float:
    vh = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * h**d
    return (1.0 - math.exp(-lam_p * vh)) / vh


def _uniform_in_ball(rng, count: int, d: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.uniform(size=count) ** (1.0 / d)
    return g * rad[:, None]


def sample_matern_cluster(window: Window, parent_intensity: float, mu: float, rc: float, rng, buffer: Window | None = None) -> PointConfiguration:
    if parent_intensity <= 0 or mu <= 0 or rc <= 0:
        raise ValueError("parameters must be positive")
    rng = _as_rng(rng)
    reg = _region(window, buffer)
    ext = reg.enlarged(rc)
    npar = rng.poisson(parent_intensity * ext.volume)
    parents = _uniform_in_cube(rng, ext.half, reg.d, npar)
    counts = rng.poisson(mu, size=npar)
    offs = _uniform_in_ball(rng, int(counts.sum()), reg.d, rc)
    pts = np.repeat(parents, counts, axis=0) + offs
    pts = pts[reg.contains(pts)] if len(pts) else pts.reshape(0, reg.d)
    cfg = PointConfiguration(pts, window, buffer, "matern_cluster", {"parent_intensity": parent_intensity, "mu": mu, "rc": rc})
    cfg.params["parents"] = parents
    return cfg


# --- Ginibre ---------------------------------------------------------------


def ginibre_matrix_size(region: Window, margin: float = 4.0) -> int:
    """Matrix size whose spectral disk covers ``region`` (in raw eigenvalue units)."""
    raw_r = region.circumradius / GINIBRE_SCALE
    return int(math.ceil((raw_r + margin) ** 2))


def ginibre_eigenvalues(size: int, rng) -> np.ndarray:
    """Raw eigenvalues of a size x size matrix with iid standard complex Gaussian entries."""
    rng = _as_rng(rng)
    a = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / math.sqrt(2.0)
    return np.linalg.eigvals(a)


def sample_ginibre(window: Window, rng, buffer: Window | None = None, max_n: int = MAX_GINIBRE_N) -> PointConfiguration:
    """Ginibre points at unit intensity, restricted to the window (or buffer)."""
    if window.d != 2:
        raise ValueError("Ginibre sampler requires d=2")
    reg = _region(window, buffer)
    size = ginibre_matrix_size(reg)
    if size > max_n:
        raise ResourceError(f"Ginibre matrix size {size} exceeds cap {max_n}")
    ev = ginibre_eigenvalues(size, rng) * GINIBRE_SCALE
    pts = np.column_stack([ev.real, ev.imag])
    pts = pts[reg.contains(pts)]
    return PointConfiguration(pts, window, buffer, "ginibre", {"matrix_size": size})


def sample_beta_ginibre(window: Window, beta: float, rng, buffer: Window | None = None, max_n: int = MAX_GINIBRE_N) -> PointConfiguration:
    """Independent beta-thinning of Ginibre, rescaled by sqrt(beta) to keep unit intensity."""
    if not (0 < beta <= 1):
        raise ValueError("beta must lie in (0, 1]")
    rng = _as_rng(rng)
    reg = _region(window, buffer)
    big = Window(reg.volume / beta, 2)
    size = ginibre_matrix_size(big)
    if size > max_n:
        raise ResourceError(f"Ginibre matrix size {size} exceeds cap {max_n}")
    ev = ginibre_eigenvalues(size, rng) * GINIBRE_SCALE
    pts = np.column_stack([ev.real, ev.imag])
    pts = pts[big.contains(pts)]
    if beta < 1:
        pts = pts[rng.uniform(size=len(pts)) < beta]
    pts = pts * math.sqrt(beta)
    pts = pts[reg.contains(pts)]
    return PointConfiguration(pts, window, buffer, "beta_ginibre", {"beta": beta, "matrix_size": size})


def sample_thinned_ginibre(window: Window, p: float, rng, buffer: Window | None = None, max_n: int = MAX_GINIBRE_N) -> PointConfiguration:
    """Ginibre thinned with retention ``p`` and no rescaling (kernel ``p K``)."""
    rng = _as_rng(rng)
    cfg = sample_ginibre(window, rng, buffer, max_n)
    keep = rng.uniform(size=len(cfg)) < p
    return PointConfiguration(cfg.points[keep], window, buffer, "thinned_ginibre", {"p": p})


def ginibre_kernel_raw(z1: complex, z2: complex) -> complex:
    """Ginibre kernel with K(z, z) = 1, density relative to Lebesgue measure divided by pi."""
    return np.exp(z1 * np.conj(z2) - 0.5 * (abs(z1) ** 2 + abs(z2) ** 2))


def ginibre_kernel_matrix(points) -> np.ndarray:
    z = _as_complex(points)
    zz = np.outer(z, np.conj(z))
    a = np.abs(z) ** 2
    return np.exp(zz - 0.5 * (a[:, None] + a[None, :]))


def _as_complex(points) -> np.ndarray:
    p = np.asarray(points)
    if np.iscomplexobj(p):
        return p.ravel()
    p = np.atleast_2d(p.astype(float))
    return p[:, 0] + 1j * p[:, 1]


def ginibre_pair_correlation(s, unit_intensity: bool = True):
    """Pair correlation ``g(s)``; unit_intensity uses the sampler's coordinates."""
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-(math.pi if unit_intensity else 1.0) * s**2)


@dataclass(frozen=True)
class Kernel:
    evaluator: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    decay: Callable[[float], float]
    intensity: float

    def matrix(self, points) -> np.ndarray:
        return self.evaluator(points)


GINIBRE_KERNEL = Kernel(ginibre_kernel_matrix, 1.0, lambda s: math.exp(-0.5 * s * s), 1.0)


# --- alpha-determinants -----------------------------------------------------


def _cycle_count(perm: Sequence[int]) -> int:
    seen = [False] * len(perm)
    cycles = 0
    for i in range(len(perm)):
        if not seen[i]:
            cycles += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = perm[j]
    return cycles


def alpha_permanent(mat: np.ndarray, alpha: float):
    """Sum over permutations of alpha^(k - cycles) times the product of matrix entries."""
    mat = np.asarray(mat)
    k = mat.shape[0]
    if k > 9:
        raise ValueError("k too large for permutation enumeration")
    if k == 0:
        return 1.0
    if alpha == -1:
        return np.linalg.det(mat)
    if alpha == 1:
        return permanent(mat)
    total = 0.0
    rows = np.arange(k)
    for perm in itertools.permutations(range(k)):
        e = k - _cycle_count(perm)
        if alpha == 0 and e > 0:
            continue
        w = 1.0 if e == 0 else alpha**e
        total = total + w * np.prod(mat[rows, list(perm)])
    return total


def permanent(mat: np.ndarray):
    """Ryser's formula, (-1)^k sum_S (-1)^|S| prod_i sum_{j in S} a_ij, over a Gray-code walk."""
    mat = np.asarray(mat)
    k = mat.shape[0]
    if k == 0:
        return 1.0
    sums = np.zeros(k, dtype=mat.dtype)
    total = 0.0
    prev = 0
    for i in range(1, 2**k):
        gray = i ^ (i >> 1)
        col = (gray ^ prev).bit_length() - 1
        sums = sums + mat[:, col] if gray >> col & 1 else sums - mat[:, col]
        prev = gray
        size = bin(gray).count("1")
        total = total + (-1) ** size * np.prod(sums)
    return (-1) ** k * total


def correlation_alpha(kernel: Kernel | Callable, alpha: float, points) -> float:
    mat = kernel.matrix(points) if isinstance(kernel, Kernel) else kernel(points)
    val = alpha_permanent(mat, alpha)
    return float(np.real(val))


# --- Ginibre count law ------------------------------------------------------


def ginibre_disk_count_pmf(r: float, truncation: int | None = None) -> np.ndarray:
    """Law of the Ginibre count in the raw-unit disk of radius ``r``.

    The count is a sum of independent Bernoulli(lambda_i) with
    lambda_i = P(Gamma(i, 1) <= r^2).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    r2 = r * r
    if truncation is None:
        truncation = int(r2 + 12 * math.sqrt(r2 + 1) + 40)
    i = np.arange(1, truncation + 1)
    lam = special.gammainc(i, r2)
    tail = special.gammainc(truncation + 1, r2)
    if tail * max(1.0, r2) > 1e-9:
        raise ValueError(f"truncation {truncation} leaves tail mass {tail:.2e}")
    pmf = np.zeros(truncation + 1)
    pmf[0] = 1.0
    for q in lam:
        pmf[1:] = pmf[1:] * (1 - q) + pmf[:-1] * q
        pmf[0] *= 1 - q
    return pmf


# --- permanental Cox --------------------------------------------------------


def gaussian_covariance(ell: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda s: 0.5 * np.exp(-(s**2) / (2 * ell * ell))


def _gaussian_fields_pair(rng, shape: tuple[int, int], step: float, cov: Callable, pad: int):
    """Two independent stationary Gaussian fields on a grid via circulant embedding."""
    m0, m1 = shape[0] + pad, shape[1] + pad
    e0, e1 = 2 * m0, 2 * m1
    i0 = np.minimum(np.arange(e0), e0 - np.arange(e0)) * step
    i1 = np.minimum(np.arange(e1), e1 - np.arange(e1)) * step
    dist = np.sqrt(i0[:, None] ** 2 + i1[None, :] ** 2)
    base = cov(dist)
    eig = np.real(np.fft.fft2(base))
    if eig.min() < -1e-8 * eig.max():
        raise ValueError("covariance not embeddable at this resolution")
    eig = np.clip(eig, 0.0, None)
    noise = rng.standard_normal((e0, e1)) + 1j * rng.standard_normal((e0, e1))
    f = np.fft.fft2(np.sqrt(eig / (e0 * e1)) * noise)
    return f.real[: shape[0], : shape[1]], f.imag[: shape[0], : shape[1]]


def _bilinear(grid: np.ndarray, lo: float, step: float, pts: np.ndarray) -> np.ndarray:
    u = (pts - lo) / step
    i = np.clip(np.floor(u).astype(int), 0, np.array(grid.shape) - 2)
    f = u - i
    g00 = grid[i[:, 0], i[:, 1]]
    g10 = grid[i[:, 0] + 1, i[:, 1]]
    g01 = grid[i[:, 0], i[:, 1] + 1]
    g11 = grid[i[:, 0] + 1, i[:, 1] + 1]
    fx, fy = f[:, 0], f[:, 1]
    return g00 * (1 - fx) * (1 - fy) + g10 * fx * (1 - fy) + g01 * (1 - fx) * fy + g11 * fx * fy


def sample_permanental_cox(window: Window, rng, ell: float = 1.0, covariance: Callable | None = None,
                           step: float | None = None, buffer: Window | None = None) -> PointConfiguration:
    """Cox process driven by Z1^2 + Z2^2 for iid Gaussian fields with covariance C = K/2."""
    if window.d != 2:
        raise ValueError("permanental sampler implemented for d=2")
    rng = _as_rng(rng)
    cov = covariance or gaussian_covariance(ell)
    step = step or ell / 8.0
    if step > ell / 8.0 + 1e-15:
        raise ValueError("grid step must be at most ell/8")
    reg = _region(window, buffer)
    m = int(math.ceil(reg.side / step)) + 1
    step = reg.side / (m - 1)
    pad = int(math.ceil(8 * ell / step))
    z1, z2 = _gaussian_fields_pair(rng, (m, m), step, cov, pad)
    lam = z1**2 + z2**2
    lmax = float(lam.max())
    count = rng.poisson(lmax * reg.volume)
    cand = _uniform_in_cube(rng, reg.half, 2, count)
    if count:
        accept = rng.uniform(size=count) * lmax < _bilinear(lam, -reg.half, step, cand)
        cand = cand[accept]
    return PointConfiguration(cand, window, buffer, "permanental", {"ell": ell})


# --- GEF zeros --------------------------------------------------------------


def gef_truncation(window: Window) -> int:
    r = window.circumradius
    return int(math.ceil(r * r + 10 * r + 20))


def sample_gef_zeros(window: Window, rng, truncation: int | None = None, buffer: Window | None = None) -> PointConfiguration:
    """Zeros of a truncated Gaussian entire function (raw units, intensity 1/pi)."""
    if window.d != 2:
        raise ValueError("GEF zeros require d=2")
    reg = _region(window, buffer)
    need = gef_truncation(reg)
    j = need if truncation is None else int(truncation)
    if j < need:
        raise ValueError(f"truncation {j} below tail-safety bound {need}")
    rng = _as_rng(rng)
    xi = (rng.standard_normal(j + 1) + 1j * rng.standard_normal(j + 1)) / math.sqrt(2.0)
    scale = reg.circumradius
    k = np.arange(j + 1)
    logc = k * math.log(scale) - 0.5 * special.gammaln(k + 1)
    logc -= logc.max()
    coef = xi * np.exp(logc)  # coefficients in w = z / scale
    roots = np.roots(coef[::-1])
    # Newton polish in w.
    dcoef = (coef * k)[1:]
    for _ in range(3):
        f = np.polyval(coef[::-1], roots)
        df = np.polyval(dcoef[::-1], roots)
        ok = np.abs(df) > 0
        roots[ok] = roots[ok] - f[ok] / df[ok]
    z = roots * scale
    pts = np.column_stack([z.real, z.imag])
    inside = reg.contains(pts)
    resid = np.abs(np.polyval(coef[::-1], roots[inside]))
    if len(resid) and resid.max() > 1e-6 * np.abs(coef).max():
        raise FloatingPointError("GEF root residual too large")
    return PointConfiguration(pts[inside], window, buffer, "gef", {"truncation": j})


# --- superposition -----------------------------------------------------------


def superpose(configs: Sequence[PointConfiguration]) -> PointConfiguration:
    if not configs:
        raise ValueError("nothing to superpose")
    w, b = configs[0].window, configs[0].buffer
    for c in configs[1:]:
        if c.window != w or c.buffer != b:
            raise ValueError("window mismatch")
    pts = np.concatenate([c.points for c in configs], axis=0)
    return PointConfiguration(pts, w, b, "superposition", {"m": len(configs)})


def superposition_correlation(rho: Callable[[np.ndarray], float], m: int, points) -> float:
    """k-point correlation of m iid copies: sum over assignments of points to copies."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = len(pts)
    total = 0.0
    for labels in itertools.product(range(m), repeat=k):
        term = 1.0
        for c in range(m):
            idx = [i for i in range(k) if labels[i] == c]
            if idx:
                term *= rho(pts[idx])
        total += term
    return total


def sample_alpha_process(window: Window, alpha: float, rng, buffer: Window | None = None, ell: float = 1.0) -> PointConfiguration:
    """alpha-permanental (alpha=1/m) or alpha-determinantal (alpha=-1/m) by superposition."""
    rng = _as_rng(rng)
    if alpha == 0:
        return sample_poisson(window, 1.0, rng, buffer)
    m = round(1.0 / abs(alpha))
    if abs(m * abs(alpha) - 1.0) > 1e-12:
        raise ValueError("alpha must be +-1/m")
    if alpha > 0:
        scaled = lambda s: alpha * np.exp(-(s**2) / (2 * ell * ell)) / 2.0
        parts = [sample_permanental_cox(window, rng, ell, scaled, buffer=buffer) for _ in range(m)]
    else:
        parts = [sample_thinned_ginibre(window, 1.0 / m, rng, buffer) for _ in range(m)]
    out = superpose(parts)
    out.process = f"alpha({alpha:g})"
    return out


# --- factorization bounds ----------------------------------------------------


def split_configuration(rng, n: int, separation: float) -> tuple[np.ndarray, np.ndarray]:
    """Two random planar blocks of total size ``n`` separated by a slab of width ``separation``.

    The minimum cross distance is at least ``separation``.
    """
    rng = _as_rng(rng)
    k = int(rng.integers(1, n))
    a = rng.uniform(-1, 1, size=(k, 2))
    b = rng.uniform(-1, 1, size=(n - k, 2))
    d = rng.normal(size=2)
    d /= np.linalg.norm(d)
    shift = float(np.max(a @ d) - np.min(b @ d)) + separation
    return a, b + shift * d


@dataclass
class FactorizationReport:
    trials: int
    det_violations: int
    perm_violations: int
    worst_det_ratio: float
    worst_perm_ratio: float


def factorization_violations(kernel: Kernel, trials: int, rng, max_n: int = 8, max_sep: float = 4.0) -> FactorizationReport:
    """Check |det K - det K1 det K2| and the permanent analogue against their decay bounds."""
    rng = _as_rng(rng)
    dv = pv = 0
    wd = wp = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, max_n + 1))
        a, b = split_configuration(rng, n, float(rng.uniform(0.0, max_sep)))
        s = float(np.linalg.norm(a[:, None] - b[None], axis=2).min())
        full, ka, kb = kernel.matrix(np.vstack([a, b])), kernel.matrix(a), kernel.matrix(b)
        om, sup = kernel.decay(s), kernel.sup_norm
        det_gap = abs(np.linalg.det(full) - np.linalg.det(ka) * np.linalg.det(kb))
        per_gap = abs(permanent(full) - permanent(ka) * permanent(kb))
        det_bound = n ** (1 + n / 2) * om * sup ** (n - 1)
        per_bound = n * math.factorial(n) * om * sup ** (n - 1)
        dv += det_gap > det_bound * (1 + 1e-12)
        pv += per_gap > per_bound * (1 + 1e-12)
        wd = max(wd, det_gap / det_bound if det_bound > 0 else math.inf)
        wp = max(wp, per_gap / per_bound if per_bound > 0 else math.inf)
    return FactorizationReport(trials, int(dv), int(pv), wd, wp)
