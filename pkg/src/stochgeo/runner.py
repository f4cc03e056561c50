"""Declarative experiments: config parsing, seeded replication, persistence."""

from __future__ import annotations

import ast
import configparser
import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .cumulants import power_law_fit
from .geometry import Window, build_window
from .processes import (
    PointConfiguration,
    ResourceError,
    RngStream,
    sample_alpha_process,
    sample_beta_ginibre,
    sample_gef_zeros,
    sample_ginibre,
    sample_matern2,
    sample_matern_cluster,
    sample_permanental_cox,
    sample_poisson,
)
from .scores import (
    CliqueCountScore,
    ConstantScore,
    CoverageScore,
    DegreeScore,
    EdgeLengthScore,
    IntrinsicVolumeScore,
    KnnEdgeScore,
    MorseScore,
    Score,
    overrun_count,
)

DEFAULT_MAX_POINTS = 1_000_000


class ConfigError(ValueError):
    """Experiment description is invalid."""


SamplerFn = Callable[[Window, np.random.Generator, Window | None], PointConfiguration]


def _process_factory(name: str, params: dict) -> tuple[SamplerFn, float]:
    """Sampler closure and its nominal intensity (for resource checks)."""
    p = dict(params)
    if name == "poisson":
        lam = float(p.get("intensity", 1.0))
        return (lambda w, g, b: sample_poisson(w, lam, g, b)), lam
    if name == "matern2":
        lam_p, h = float(p.get("lam_p", 2.0)), float(p.get("h", 0.3))
        return (lambda w, g, b: sample_matern2(w, lam_p, h, g, b)), lam_p
    if name == "matern_cluster":
        par, mu, rc = float(p.get("parent_intensity", 0.2)), float(p.get("mu", 5.0)), float(p.get("rc", 1.0))
        return (lambda w, g, b: sample_matern_cluster(w, par, mu, rc, g, b)), par * mu
    if name == "ginibre":
        return (lambda w, g, b: sample_ginibre(w, g, b)), 1.0
    if name == "beta_ginibre":
        beta = float(p.get("beta", 0.5))
        return (lambda w, g, b: sample_beta_ginibre(w, beta, g, b)), 1.0
    if name == "permanental":
        ell = float(p.get("ell", 1.0))
        return (lambda w, g, b: sample_permanental_cox(w, g, ell, buffer=b)), 1.0
    if name == "gef":
        return (lambda w, g, b: sample_gef_zeros(w, g, buffer=b)), 1.0 / math.pi
    if name == "alpha":
        alpha = float(p.get("alpha", -0.5))
        return (lambda w, g, b: sample_alpha_process(w, alpha, g, b)), 1.0
    raise ConfigError(f"unknown process tag '{name}'")


def make_score(name: str, params: dict) -> Score:
    p = dict(params)
    try:
        if name == "constant":
            return ConstantScore()
        if name == "edge_length":
            return EdgeLengthScore(float(p["r"]))
        if name == "clique":
            return CliqueCountScore(int(p["k"]), float(p["r"]))
        if name == "degree":
            return DegreeScore(int(p["k"]), float(p["r"]))
        if name == "morse":
            return MorseScore(int(p["k"]), float(p["r"]))
        if name == "coverage":
            return CoverageScore(int(p["k"]), float(p["r"]), int(p.get("nodes", 4096)))
        if name == "intrinsic_volume":
            return IntrinsicVolumeScore(int(p["j"]), float(p["r"]))
        if name == "knn":
            return KnnEdgeScore(int(p["k"]))
    except KeyError as exc:
        raise ConfigError(f"score '{name}' missing parameter {exc}") from None
    raise ConfigError(f"unknown score tag '{name}'")


TEST_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "const": lambda x: np.ones(len(x)),
    "half": lambda x: (x[:, 0] < 0).astype(float),
    "affine": lambda x: x[:, 0] + 1.0,
}


def default_margin(score: Score, intensity: float) -> float:
    if score.fixed_radius is not None:
        return float(score.fixed_radius)
    # data-dependent radius: generous multiple of the typical k-th neighbour distance
    k = getattr(score, "k", 1)
    return 12.0 * math.sqrt((k + 1) / (math.pi * max(intensity, 1e-12)))


@dataclass
class ExperimentSpec:
    process: str
    score: str
    ladder: list[float]
    replicates: int
    seed: int
    process_params: dict = field(default_factory=dict)
    score_params: dict = field(default_factory=dict)
    test_function: str = "const"
    d: int = 2
    margin: float | None = None
    max_points: int = DEFAULT_MAX_POINTS
    outputs: list[str] = field(default_factory=lambda: ["H", "Hhat", "mu", "count", "overruns"])

    def validate(self) -> None:
        _process_factory(self.process, self.process_params)
        make_score(self.score, self.score_params)
        if self.test_function not in TEST_FUNCTIONS:
            raise ConfigError(f"unknown test function tag '{self.test_function}'")
        if not self.ladder or any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError("ladder must be non-empty and strictly increasing")
        if any(n <= 0 for n in self.ladder):
            raise ConfigError("ladder entries must be positive")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.d not in (1, 2, 3):
            raise ConfigError("d must be 1, 2 or 3")

    def spec_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(v: str):
    try:
        return ast.literal_eval(v)
    except (ValueError, SyntaxError):
        return v.strip()


def parse_config(text: str) -> ExperimentSpec:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for sec in ("experiment", "process", "score"):
        if sec not in cp:
            raise ConfigError(f"missing [{sec}] section")
    ex = {k: _coerce(v) for k, v in cp["experiment"].items()}
    proc = {k: _coerce(v) for k, v in cp["process"].items()}
    sc = {k: _coerce(v) for k, v in cp["score"].items()}
    try:
        ladder = ex.get("ladder")
        ladder = [float(x) for x in (ladder if isinstance(ladder, (list, tuple)) else [ladder])]
        outputs = ex.get("outputs")
        if isinstance(outputs, str):
            outputs = [o.strip() for o in outputs.split(",") if o.strip()]
        spec = ExperimentSpec(
            process=str(proc.pop("name")),
            score=str(sc.pop("name")),
            ladder=ladder,
            replicates=int(ex.get("replicates", 1)),
            seed=int(ex.get("seed", 0)),
            process_params=proc,
            score_params=sc,
            test_function=str(ex.get("test_function", "const")),
            d=int(ex.get("d", 2)),
            margin=None if ex.get("margin") is None else float(ex["margin"]),
            max_points=int(ex.get("max_points", DEFAULT_MAX_POINTS)),
        )
        if outputs:
            spec.outputs = list(outputs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    spec.validate()
    return spec


def load_config(path: str) -> ExperimentSpec:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(str(exc)) from None


def sample_configuration(spec: ExperimentSpec, n: float, replicate: int, buffered: bool = True) -> PointConfiguration:
    sampler, lam = _process_factory(spec.process, spec.process_params)
    score = make_score(spec.score, spec.score_params)
    win = build_window(n, spec.d)
    margin = spec.margin if spec.margin is not None else default_margin(score, lam)
    buf = win.enlarged(margin) if buffered and margin > 0 else None
    region = buf or win
    if lam * region.volume > spec.max_points:
        raise ResourceError(f"expected {lam * region.volume:.0f} points exceeds cap {spec.max_points}")
    rng = RngStream(spec.seed, replicate).generator(int(round(n * 1000)))
    cfg = sampler(win, rng, buf)
    if len(cfg) > spec.max_points:
        raise ResourceError(f"{len(cfg)} points exceeds cap {spec.max_points}")
    cfg.seed = spec.seed
    return cfg


def replicate_statistics(spec: ExperimentSpec, n: float, replicate: int) -> dict[str, float]:
    cfg = sample_configuration(spec, n, replicate)
    score = make_score(spec.score, spec.score_params)
    idx = np.flatnonzero(cfg.in_window) if len(cfg) else np.zeros(0, dtype=int)
    out: dict[str, float] = {}
    if len(idx):
        hat_vals = score.values(cfg.points, idx)
        win_pts = cfg.points[idx]
        h_vals = score.values(win_pts)
    else:
        hat_vals = h_vals = np.zeros(0)
        win_pts = np.zeros((0, spec.d))
    if not np.all(np.isfinite(hat_vals)) or not np.all(np.isfinite(h_vals)):
        raise FloatingPointError("non-finite score value")
    stats_all = {
        "H": float(np.sum(h_vals)),
        "Hhat": float(np.sum(hat_vals)),
        "count": float(len(idx)),
        "overruns": float(overrun_count(score, cfg, idx)),
        "sumsq": float(np.sum(hat_vals**2)),
    }
    if "mu" in spec.outputs:
        scale = n ** (-1.0 / spec.d)
        f = TEST_FUNCTIONS[spec.test_function]
        stats_all["mu"] = float(np.sum(f(win_pts * scale) * h_vals)) if len(h_vals) else 0.0
    for k in spec.outputs:
        if k in stats_all:
            out[k] = stats_all[k]
    return out


def _job(args):
    spec, n, i = args
    return n, i, replicate_statistics(spec, n, i)


@dataclass
class ResultSet:
    rows: list[tuple[float, int, str, float]]
    spec_hash: str
    seed: int
    version: str = __version__

    def values(self, statistic: str, n: float) -> np.ndarray:
        return np.array([v for (m, _, s, v) in self.rows if s == statistic and m == n])

    def ladder(self) -> list[float]:
        return sorted({r[0] for r in self.rows})

    def statistics(self) -> list[str]:
        return sorted({r[2] for r in self.rows})

    def summary(self) -> dict:
        out = {"spec_hash": self.spec_hash, "seed": self.seed, "version": self.version, "statistics": {}}
        ns = self.ladder()
        for stat in self.statistics():
            per_n = []
            for n in ns:
                v = self.values(stat, n)
                reps = len(v)
                var = float(v.var(ddof=1)) if reps > 1 else math.nan
                # stderr of the sample variance under approximate normality
                per_n.append({"n": n, "replicates": reps, "mean": float(v.mean()),
                              "mean_se": float(v.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
                              "var": var, "var_se": var * math.sqrt(2.0 / (reps - 1)) if reps > 1 else math.nan})
            entry = {"per_n": per_n}
            if len(ns) >= 2 and all(p["replicates"] > 1 for p in per_n):
                means = [p["mean"] for p in per_n]
                vars_ = [p["var"] for p in per_n]
                if all(v > 0 for v in vars_):
                    b, se, _ = power_law_fit(ns, vars_, [p["var_se"] for p in per_n])
                    entry["var_slope"], entry["var_slope_se"] = b, se
                if all(m > 0 for m in means):
                    b, se, _ = power_law_fit(ns, means, [max(p["mean_se"], 1e-300) for p in per_n])
                    entry["mean_slope"], entry["mean_slope_se"] = b, se
            out["statistics"][stat] = entry
        return out


def run(spec: ExperimentSpec, threads: int = 1) -> ResultSet:
    spec.validate()
    jobs = [(spec, float(n), i) for n in spec.ladder for i in range(spec.replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_job(j) for j in jobs]
    results.sort(key=lambda t: (t[0], t[1]))
    rows = []
    for n, i, st in results:
        for k in spec.outputs:
            if k in st:
                rows.append((n, i, k, st[k]))
    return ResultSet(rows, spec.spec_hash(), spec.seed)


def _existing_hash(path: str) -> str | None:
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        first = fh.readline()
    if path.endswith(".jsonl"):
        try:
            return json.loads(first).get("spec_hash")
        except json.JSONDecodeError:
            return None
    if first.startswith("# spec_hash="):
        return first.strip().split("=", 1)[1]
    return None


def emit(results: ResultSet, fmt: str, path: str) -> list[str]:
    """Write rows plus a ``.summary`` file; refuses to overwrite output from a different spec."""
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown format '{fmt}'")
    old = _existing_hash(path)
    if old is not None and old != results.spec_hash:
        raise ConfigError(f"{path} holds results of spec {old}, refusing to append {results.spec_hash}")
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            fh.write(f"# spec_hash={results.spec_hash}\n")
            w = csv.writer(fh)
            w.writerow(["n", "replicate", "statistic", "value"])
            for n, i, s, v in results.rows:
                w.writerow([repr(n), i, s, repr(float(v))])
        else:
            for n, i, s, v in results.rows:
                fh.write(json.dumps({"n": n, "replicate": i, "statistic": s, "value": v, "spec_hash": results.spec_hash}) + "\n")
    spath = path + ".summary"
    with open(spath, "w") as fh:
        json.dump(results.summary(), fh, indent=2, sort_keys=True)
    return [path, spath]


def read_results(path: str) -> ResultSet:
    rows = []
    h = _existing_hash(path)
    with open(path) as fh:
        if path.endswith(".jsonl"):
            for line in fh:
                o = json.loads(line)
                rows.append((float(o["n"]), int(o["replicate"]), o["statistic"], float(o["value"])))
        else:
            r = csv.reader(ln for ln in fh if not ln.startswith("#"))
            next(r)
            for n, i, s, v in r:
                rows.append((float(n), int(i), s, float(v)))
    return ResultSet(rows, h or "", -1)
