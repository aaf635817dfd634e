"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 failed oracle check.
Parameters come from flags, then a JSON config file (``--config``, which may
also be a previously written manifest), then documented defaults.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import forest as fst
from . import lpp, profiles, quilt, stats
from .env import GridSpec, build_grid, dump_field, sample_field
from .scaled import ScaledPoint, polymer

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3

COMMON = {"n": 64, "seed": 0, "points_per_unit": 4.0, "window": 4.0, "out": "out",
          "threads": None, "banded": False}

DEFAULTS = {
    "simulate": {},
    "profile": {"f": "narrow-wedge(0)", "y_points": 201},
    "forest": {"f": "flat", "y_points": 201, "level": 0.5, "eps": None},
    "quilt": {"f": "flat", "y_points": 201, "D": 2.5, "chi": 0.5, "j_max": None},
    "stats": {"experiment": "trials", "trials": 10, "n_list": None, "f": "flat", "y_points": 201,
              "D": 2.5, "chi": 0.5, "j_max": None, "eps_list": None, "r_list": None, "lag": 0.1},
    "oracle-check": {"max_lines": 4, "max_points": 7, "seeds": 200},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="JSON config file or run manifest")
    p.add_argument("--n", type=int, help="number of lines minus one (default 64)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--points-per-unit", type=float, help="grid density rho (default 4)")
    p.add_argument("--window", type=float, help="scaled half window X (default 4)")
    p.add_argument("--banded", action="store_true", default=None, help="banded field storage")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--threads", type=int, help="worker threads (fallback: QUILT_THREADS)")


def build_parser():
    ap = _Parser(prog="lppquilt", description="Brownian LPP polymers, forests and patchwork quilts.")
    ap.add_argument("--version", action="version", version=f"lppquilt {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a field, dump it and report the (0,0)->(0,1) polymer")
    _common(p)

    p = sub.add_parser("profile", help="narrow-wedge or f-rewarded weight profile as CSV")
    _common(p)
    p.add_argument("--f", help="initial condition: narrow-wedge(x0), flat, slope(a), "
                              "random-brownian(sigma,seed) or a CSV path")
    p.add_argument("--y-points", type=int, help="points of the y-grid on [-1, 1] (default 201)")

    p = sub.add_parser("forest", help="canopy decomposition at a level as JSON")
    _common(p)
    p.add_argument("--f")
    p.add_argument("--y-points", type=int)
    p.add_argument("--level", type=float, help="canopy level s in (0, 1) (default 0.5)")
    p.add_argument("--eps", type=float, help="also compute special points and split pieces")

    p = sub.add_parser("quilt", help="decompose the f-rewarded profile into a patchwork quilt")
    _common(p)
    p.add_argument("--f")
    p.add_argument("--y-points", type=int)
    p.add_argument("--D", type=float, help="NormalCoal constant D (default 2.5)")
    p.add_argument("--chi", type=float, help="NormalCoal exponent chi (default 0.5)")
    p.add_argument("--j-max", type=int, help="last dyadic level (default: finest the mesh allows)")

    p = sub.add_parser("stats", help="Monte Carlo experiments")
    _common(p)
    p.add_argument("--experiment", choices=["trials", "transversal", "tightness", "bridge",
                                            "events", "disjoint"])
    p.add_argument("--trials", type=int)
    p.add_argument("--n-list", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--eps-list", type=lambda s: [float(v) for v in s.split(",")])
    p.add_argument("--r-list", type=lambda s: [float(v) for v in s.split(",")])
    p.add_argument("--lag", type=float)
    p.add_argument("--f")
    p.add_argument("--y-points", type=int)
    p.add_argument("--D", type=float)
    p.add_argument("--chi", type=float)
    p.add_argument("--j-max", type=int)

    p = sub.add_parser("oracle-check", help="DP and disjoint counts against brute force")
    _common(p)
    p.add_argument("--max-lines", type=int)
    p.add_argument("--max-points", type=int)
    p.add_argument("--seeds", type=int)
    return ap


def resolve_config(command, args) -> dict:
    cfg = {**COMMON, **DEFAULTS[command]}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        loaded = loaded.get("config", loaded)
        unknown = set(loaded) - set(cfg) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["threads"] is None:
        cfg["threads"] = int(os.environ.get("QUILT_THREADS", "1"))
    cfg["command"] = command
    return cfg


def canonical(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)


def _versions():
    import numba
    import scipy
    return {"lppquilt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


class Output:
    """Writes outputs under the run directory, each tagged with the manifest hash."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dir = Path(cfg["out"])
        self.dir.mkdir(parents=True, exist_ok=True)
        reproducible = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
        self.hash = hashlib.sha256(canonical(reproducible).encode()).hexdigest()
        self.files = []

    def _tag(self):
        return f"manifest.json sha256:{self.hash}"

    def json(self, name, payload):
        text = json.dumps({"manifest": self._tag(), **payload}, indent=2, sort_keys=True, default=_jsonable)
        (self.dir / name).write_text(text + "\n")
        self.files.append(name)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# {self._tag()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        (self.dir / name).write_text(buf.getvalue())
        self.files.append(name)

    def binary(self, name, writer):
        writer(self.dir / name)
        self.files.append(name)

    def manifest(self):
        cfg = {k: v for k, v in self.cfg.items() if k not in ("out", "threads")}
        text = json.dumps({"config": cfg, "config_hash": self.hash, "seed": self.cfg["seed"],
                           "versions": _versions(), "provenance": f"lppquilt-{__version__}",
                           "files": sorted(self.files)},
                          indent=2, sort_keys=True, default=_jsonable)
        (self.dir / "manifest.json").write_text(text + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _field(cfg):
    grid = build_grid(cfg["n"], cfg["window"], cfg["points_per_unit"], banded=bool(cfg["banded"]))
    return sample_field(grid, cfg["seed"])


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else v


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, out):
    field = _field(cfg)
    n = cfg["n"]
    p = polymer(field, n, ScaledPoint(0.0, 0.0), ScaledPoint(0.0, 1.0))
    out.binary("field.bin", lambda path: dump_field(field, path))
    out.json("polymer.json", {"n": n, "weight": p.weight, "jumps": p.staircase.jumps.tolist(),
                              "grid": {"origin": field.grid.origin, "spacing": field.grid.spacing,
                                       "num_points": field.grid.num_points,
                                       "num_lines": field.grid.num_lines}})
    return EXIT_OK


def cmd_profile(cfg, out):
    field = _field(cfg)
    f = stats.make_initial_condition(cfg["f"], cfg["window"])
    y = profiles.default_y_grid(cfg["y_points"])
    prof = profiles.f_rewarded_profile(field, cfg["n"], f, y)
    roots = fst.scaled_x(field.grid, cfg["n"], prof.roots, 0)
    out.csv("profile.csv", ["y", "value", "kind", "n", "seed", "root"],
            [[f"{a:.12g}", _fmt(float(v)), prof.kind, cfg["n"], cfg["seed"], f"{r:.12g}"]
             for a, v, r in zip(y, prof.values, roots)])
    out.json("profile.json", {"kind": prof.kind, "untrusted": prof.untrusted})
    return EXIT_OK


def cmd_forest(cfg, out):
    field = _field(cfg)
    f = stats.make_initial_condition(cfg["f"], cfg["window"])
    y = profiles.default_y_grid(cfg["y_points"])
    dec = fst.canopy_decomposition(field, cfg["n"], f, cfg["level"], y, eps=cfg["eps"])
    out.json("canopies.json", json.loads(dec.to_json()))
    out.csv("canopies.csv", ["canopy", "left", "right", "root", "special_point"],
            [[i, f"{c.interval[0]:.12g}", f"{c.interval[1]:.12g}", f"{c.root:.12g}",
              "" if c.special_point is None else f"{c.special_point:.12g}"]
             for i, c in enumerate(dec.canopies)])
    return EXIT_OK


def cmd_quilt(cfg, out):
    field = _field(cfg)
    f = stats.make_initial_condition(cfg["f"], cfg["window"])
    y = profiles.default_y_grid(cfg["y_points"])
    q, rep, _ = quilt.decompose_profile(field, cfg["n"], f, cfg["D"], cfg["chi"], cfg["j_max"], y)
    payload = {"report": json.loads(rep.to_json())}
    if q is not None:
        payload["quilt"] = json.loads(q.to_json())
    out.json("quilt.json", payload)
    out.csv("patches.csv", ["patch", "left", "right", "rni", "deviation", "fidelity"],
            [[i, f"{lo:.12g}", f"{hi:.12g}", rep.rnis[i], f"{rep.deviations[i]:.6e}",
              f"{rep.fidelity[i]:.6e}"] for i, (lo, hi) in enumerate(rep.bounds)])
    return EXIT_OK


def _stats_trials(cfg, out):
    keys = ["index", "seed", "n", "weight", "midpoint", "midpoint_unscaled", "error_flag", "gamma", "stitches",
            "fidelity", "stitched_deviation", "quilt_pass", "error"]
    ns = cfg["n_list"] or [cfg["n"]]
    rows = []
    for n in ns:
        ts = stats.run_trials({"n": n, "trials": cfg["trials"], "seed": cfg["seed"],
                               "points_per_unit": cfg["points_per_unit"], "window": cfg["window"],
                               "f": cfg["f"], "D": cfg["D"], "chi": cfg["chi"], "j_max": cfg["j_max"],
                               "y_points": cfg["y_points"], "threads": cfg["threads"]})
        rows += [[_fmt(r.get(k, "")) for k in keys] for r in ts.records]
    out.csv("trials.csv", keys, rows)


def _stats_transversal(cfg, out, tight=False):
    ns = cfg["n_list"] or [32, 64, 128, 256]
    devs, weights = {}, {}
    for n in ns:
        g = build_grid(n, 0.01, stats.bias_matched_density(n, rho_ref=cfg["points_per_unit"]))
        devs[n], weights[n] = [], []
        for i in range(cfg["trials"]):
            field = sample_field(g, stats.trial_seed(cfg["seed"], i))
            weights[n].append(polymer(field, n, ScaledPoint(0.0, 0.0), ScaledPoint(0.0, 1.0)).weight)
            devs[n].append(stats.midpoint_deviation(field, n))
    rows = [[n, i, _fmt(weights[n][i]), _fmt(devs[n][i])] for n in ns for i in range(cfg["trials"])]
    out.csv("samples.csv", ["n", "trial", "weight", "midpoint_unscaled"], rows)
    summary = {"tightness": stats.weight_tightness(weights)}
    summary["tightness"]["ks"] = {f"{a}-{b}": v for (a, b), v in summary["tightness"]["ks"].items()}
    if len(ns) >= 3 and cfg["trials"] >= 2:
        fit = stats.transversal_exponent(devs, min_trials=2)
        summary["transversal"] = {"slope": fit.slope, "ci": fit.ci}
    out.json("summary.json", summary)


def _stats_bridge(cfg, out):
    n = cfg["n"]
    y = profiles.default_y_grid(cfg["y_points"])
    g = build_grid(n, 1.5, cfg["points_per_unit"])
    V = [profiles.narrow_wedge_profile(sample_field(g, stats.trial_seed(cfg["seed"], i)), n, 0.0, y).values
         for i in range(cfg["trials"])]
    rep = stats.bridge_comparison_suite(V, y, (cfg["lag"],), seed=cfg["seed"])
    out.json("bridge.json", rep)


def _stats_events(cfg, out):
    n = cfg["n"]
    eps_list = cfg["eps_list"] or [0.4, 0.2, 0.1]
    r_list = cfg["r_list"] or [1, 2, 4, 8]
    g = build_grid(n, 2.5, cfg["points_per_unit"])
    late = {e: [] for e in eps_list}
    dev = {r: [] for r in r_list}
    for i in range(cfg["trials"]):
        field = sample_field(g, stats.trial_seed(cfg["seed"], i))
        for r, failed in stats.poly_dev_failures(field, n, 0.5, r_list).items():
            dev[r].append(failed)
        fo = fst.Forest(field, n, profiles.narrow_wedge(0.0))
        for e in eps_list:
            late[e].append(fst.late_coal_event(field, n, 1.0, e, forest=fo, stop_at_first=True)[0])
    rows = [["not-PolyDevReg", r["param"], r["count"], r["trials"], _fmt(r["p"]), _fmt(r["lo"]), _fmt(r["hi"])]
            for r in stats.event_frequency(dev)]
    rows += [["LateCoal", r["param"], r["count"], r["trials"], _fmt(r["p"]), _fmt(r["lo"]), _fmt(r["hi"])]
             for r in stats.event_frequency(late)]
    out.csv("events.csv", ["event", "param", "count", "trials", "p", "lo", "hi"], rows)


def _stats_disjoint(cfg, out):
    n = cfg["n"]
    eps_list = cfg["eps_list"] or [0.4, 0.2, 0.1, 0.05]
    g = build_grid(n, 0.6, cfg["points_per_unit"])
    counts = {(e, c): [] for e in eps_list for c in ("half-width", "length")}
    for i in range(cfg["trials"]):
        field = sample_field(g, stats.trial_seed(cfg["seed"], i))
        for e, c in counts:
            counts[(e, c)].append(stats.disjoint_count(field, n, e, c))
    summary = {}
    for c in ("half-width", "length"):
        for m in (2, 3):
            r = stats.disjoint_tail_exponent({e: counts[(e, c)] for e in eps_list}, m)
            r["probs"] = {str(k): v for k, v in r["probs"].items()}
            summary[f"{c}/m={m}"] = r
    out.json("disjoint.json", summary)


def cmd_stats(cfg, out):
    exp = cfg["experiment"]
    if exp == "trials":
        _stats_trials(cfg, out)
    elif exp in ("transversal", "tightness"):
        _stats_transversal(cfg, out)
    elif exp == "bridge":
        _stats_bridge(cfg, out)
    elif exp == "events":
        _stats_events(cfg, out)
    elif exp == "disjoint":
        _stats_disjoint(cfg, out)
    return EXIT_OK


def oracle_check(max_lines=4, max_points=7, seeds=200):
    """DP against brute force on every grid up to the given size, plus disjoint counts."""
    worst, geodesic_fail, disjoint_fail, cases = 0.0, 0, 0, 0
    for seed in range(seeds):
        for lines, points in itertools.product(range(1, max_lines + 1), range(2, max_points + 1)):
            field = sample_field(GridSpec(0.0, 1.0, points, lines), seed)
            for x in range(points):
                prof = lpp.last_passage_profile(field, (x, 0), lines - 1)
                for y in range(x, points):
                    v, winners = lpp.brute_force_last_passage(field, (x, 0), (y, lines - 1))
                    worst = max(worst, abs(v - prof.values[y]))
                    cases += 1
            rng = np.random.default_rng([seed, lines, points])
            S = rng.choice(points, rng.integers(1, points + 1), replace=False)
            E = rng.choice(points, rng.integers(1, points + 1), replace=False)
            if E.max() >= S.min():
                c, _ = lpp.max_disjoint_polymers_indices(field, S, E, 0, lines - 1)
                b = lpp.brute_force_max_disjoint(field, S, E, 0, lines - 1, 3)
                disjoint_fail += int(min(c, 3) != b)
    return {"cases": cases, "max_abs_error": worst, "disjoint_mismatches": disjoint_fail,
            "passed": worst <= 1e-12 and disjoint_fail == 0}


def cmd_oracle(cfg, out):
    res = oracle_check(cfg["max_lines"], cfg["max_points"], cfg["seeds"])
    out.json("oracle.json", res)
    return EXIT_OK if res["passed"] else EXIT_ACCEPTANCE


COMMANDS = {"simulate": cmd_simulate, "profile": cmd_profile, "forest": cmd_forest,
            "quilt": cmd_quilt, "stats": cmd_stats, "oracle-check": cmd_oracle}


def run_cli(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        cfg = resolve_config(args.command, args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"lppquilt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = Output(cfg)
        code = COMMANDS[args.command](cfg, out)
        out.manifest()
        return code
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"lppquilt: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
