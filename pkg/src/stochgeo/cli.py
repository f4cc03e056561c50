"""Command line entry point: ``stochgeo {sample,score,experiment,analyze,selftest}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from .processes import PointConfiguration, ResourceError
from .runner import ConfigError, emit, load_config, make_score, read_results, run, sample_configuration

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("stochgeo")


def _spec(args):
    spec = load_config(args.config)
    if args.seed is not None:
        spec.seed = args.seed
    return spec


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_sample(args) -> int:
    spec = _spec(args)
    n = args.n if args.n is not None else spec.ladder[0]
    cfg = sample_configuration(spec, n, args.replicate)
    path = os.path.join(_outdir(args), f"config_n{n:g}_r{args.replicate}.txt")
    with open(path, "w") as fh:
        fh.write(cfg.to_text())
    print(path)
    return EXIT_OK


def cmd_score(args) -> int:
    spec = _spec(args)
    score = make_score(spec.score, spec.score_params)
    with open(args.input) as fh:
        cfg = PointConfiguration.from_text(fh.read())
    idx = np.flatnonzero(cfg.in_window)
    hhat = score.values(cfg.points, idx) if len(idx) else np.zeros(0)
    h = score.values(cfg.points[idx]) if len(idx) else np.zeros(0)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(hhat))):
        raise FloatingPointError("non-finite score value")
    print(json.dumps({"n": cfg.window.n, "points_in_window": int(len(idx)), "H": float(h.sum()), "Hhat": float(hhat.sum())}))
    return EXIT_OK


def cmd_experiment(args) -> int:
    spec = _spec(args)
    res = run(spec, threads=args.threads)
    path = os.path.join(_outdir(args), f"results.{args.format}")
    for p in emit(res, args.format, path):
        print(p)
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .cumulants import clt_diagnostics, cumulant_ladder_from_values

    src = args.input or os.path.join(args.out, "results.csv")
    if not os.path.exists(src):
        raise ConfigError(f"no results file at {src}")
    res = read_results(src)
    ns = res.ladder()
    vals = {n: res.values(args.statistic, n) for n in ns}
    if not all(len(v) for v in vals.values()):
        raise ConfigError(f"statistic '{args.statistic}' not present in {src}")
    reps = min(len(v) for v in vals.values())
    kmax = args.kmax or (4 if reps >= 2000 else 3 if reps >= 500 else 2)
    lad = cumulant_ladder_from_values(vals, kmax)
    outdir = _outdir(args)
    lpath = os.path.join(outdir, f"cumulants_{args.statistic}.csv")
    lad.to_csv(lpath)
    print(lpath)
    top = vals[ns[-1]]
    if len(top) >= 1000:
        rep = clt_diagnostics(top)
        cpath = os.path.join(outdir, f"clt_{args.statistic}.json")
        with open(cpath, "w") as fh:
            json.dump({"n": ns[-1], **asdict(rep)}, fh, indent=2)
        print(cpath)
    return EXIT_OK


def selftest_checks() -> list[tuple[str, bool, str]]:
    """Fast exact checks; each entry is (name, ok, detail)."""
    from .cumulants import cumulants_from_moments, partition_table
    from .geometry import build_window, miniball
    from .processes import RngStream, ginibre_disk_count_pmf, sample_poisson
    from .scores import CliqueCountScore, EdgeLengthScore, buffered_statistic

    out = []
    pmf = ginibre_disk_count_pmf(1.0)
    mean = float(np.dot(np.arange(len(pmf)), pmf))
    out.append(("ginibre_pmf_mean", abs(pmf.sum() - 1) < 1e-9 and abs(mean - 1.0) < 1e-9, f"sum={pmf.sum():.12f} mean={mean:.12f}"))
    bell = [len(partition_table(k)) for k in range(1, 6)]
    out.append(("bell_numbers", bell == [1, 2, 5, 15, 52], str(bell)))
    _, r = miniball(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]))
    out.append(("miniball_right_triangle", abs(r - math.sqrt(2)) < 1e-9, f"r={r!r}"))
    c = cumulants_from_moments([1.0, 2.0, 6.0])
    out.append(("exponential_cumulants", bool(np.allclose(c, [1, 1, 2])), str([float(x) for x in c])))
    tri = np.array([[0.0, 0.0], [0.5, 0.0], [0.25, 0.4]])
    tot = float(CliqueCountScore(3, 0.5).values(tri).sum())
    out.append(("clique_triangle", abs(tot - 1.0) < 1e-12, f"total={tot}"))
    win = build_window(256.0, 2)
    vals = []
    for i in range(40):
        cfg = sample_poisson(win, 1.0, RngStream(12345, i).generator(), win.enlarged(0.5))
        vals.append(buffered_statistic(EdgeLengthScore(0.5), cfg)[0] / win.volume)
    m, se = float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    out.append(("poisson_edge_mean", abs(m - math.pi / 24) < 4 * se + 0.01, f"{m:.4f} +- {se:.4f} vs {math.pi / 24:.4f}"))
    return out


def cmd_selftest(args) -> int:
    ok = True
    for name, passed, detail in selftest_checks():
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochgeo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("sample", help="draw one configuration")
    common(p)
    p.add_argument("--n", type=float, default=None)
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score", help="evaluate the configured score on a configuration file")
    common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="run the full replicate ladder")
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("analyze", help="cumulant ladder and CLT report from results")
    common(p, config=False)
    p.add_argument("--input", default=None)
    p.add_argument("--statistic", default="Hhat")
    p.add_argument("--kmax", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("selftest", help="fast exact checks")
    common(p, config=False)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
