"""Command-line experiment runner.

Every run reads one JSON config, writes its tables into ``--out`` and a
``manifest.json`` describing the run.  The manifest hash covers the
subcommand, the normalized config and the package version, never the
timestamp, so a repeated run produces byte-identical tables.

CSV dialect: comma separated, LF line ends, '.' decimal point, rationals
written as ``p/q``, floats as Python ``repr``.  The first line of every CSV
is ``# manifest: <sha256>``.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Callable, Dict, List, Sequence

from . import __version__
from .rational import InvalidScalar, as_fraction, to_str

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Config parsing


def _refuse_float(text):
    raise ConfigError(f"float literal {text} refused; write exact values as \"p/q\" strings or integers")


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        cfg = json.loads(text, parse_float=_refuse_float, parse_constant=_refuse_float)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {version}")
    return cfg


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def _q(value) -> Fraction:
    return as_fraction(value)


def _real(value) -> float:
    """Solver parameters that are genuinely real (tolerances, a): exact strings converted once."""
    return float(as_fraction(value))


def _width(cfg: dict, key: str = "w"):
    from .staircase import WidthSequence

    raw = _need(cfg, key)
    if isinstance(raw, dict) and "decay" in raw:
        if raw["decay"] != "inverse_abs_plus_two":
            raise ConfigError(f"unknown decay rule {raw['decay']!r}")
        return WidthSequence.decay()
    if isinstance(raw, dict) and "constant" in raw:
        return WidthSequence.constant(_q(raw["constant"]))
    if isinstance(raw, dict) and "ringed" in raw:
        r = raw["ringed"]
        return WidthSequence.ringed_at(int(r["N"]), [_q(v) for v in r["inner"]], _q(r.get("outside", "1/2")))
    return WidthSequence.from_json(raw)


def _direction(value, sign=1):
    from .staircase import Direction

    if isinstance(value, dict):
        return Direction(_q(value["slope"]), int(value.get("vertical_sign", sign)))
    return Direction(_q(value), sign)


def _point(value):
    from .staircase import SectionPoint

    return SectionPoint(int(value["level"]), _q(value["x"]) % 2)


# --------------------------------------------------------------------------
# Output


def manifest_hash(kind: str, cfg: dict) -> str:
    payload = json.dumps({"kind": kind, "config": cfg, "version": __version__},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, Fraction):
        return to_str(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


class Output:
    def __init__(self, out_dir: str, kind: str, cfg: dict, threads: int, backend: str):
        self.dir = out_dir
        self.kind = kind
        self.cfg = cfg
        self.hash = manifest_hash(kind, cfg)
        self.files: Dict[str, str] = {}
        self.threads, self.backend = threads, backend
        os.makedirs(out_dir, exist_ok=True)

    def _write(self, name: str, data: str):
        path = os.path.join(self.dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data.encode()).hexdigest()

    def csv(self, name: str, header: Sequence[str], rows):
        buf = io.StringIO()
        buf.write(f"# manifest: {self.hash}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_cell(v) for v in row])
        self._write(name, buf.getvalue())

    def json(self, name: str, obj: dict):
        obj = dict(obj, manifest=self.hash)
        self._write(name, json.dumps(obj, sort_keys=True, indent=2, default=_cell) + "\n")

    def finish(self):
        manifest = {
            "kind": self.kind,
            "config": self.cfg,
            "version": __version__,
            "schema": SCHEMA_VERSION,
            "hash": self.hash,
            "files": self.files,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        with open(os.path.join(self.dir, "manifest.json"), "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# Subcommands


def run_orbit(cfg, out: Output):
    from .engine import lattice_for
    from .section import StaircaseSystem, orbit

    w, d, p = _width(cfg), _direction(_need(cfg, "direction")), _point(_need(cfg, "start"))
    steps = int(_need(cfg, "steps"))
    rows = []
    if out.backend == "float64":
        lat = lattice_for(w, d, [p], -steps - abs(p.level) - 2, steps + abs(p.level) + 2)
        arr = lat.orbit(p, steps)
        letters = {-1: "D", 0: "S", 1: "U"}
        for i in range(len(arr)):
            q = arr.point(i)
            rows.append((i + 1, q.level, q.x, letters[int(arr.changes[i])]))
        stop = {0: "budget", 1: "singular", 2: "left-window"}[arr.status] if len(arr) < steps else "budget"
    else:
        rec = orbit(StaircaseSystem(w, d), p, steps)
        for i, o in enumerate(rec.outcomes, 1):
            if getattr(o, "singular", False):
                break
            rows.append((i, o.point.level, o.point.x, o.slit.value))
        stop = rec.termination
    out.csv("orbit.csv", ["step", "level", "x", "slit"], rows)
    out.json("summary.json", {"steps": len(rows), "termination": stop})


def run_boxes(cfg, out: Output):
    from .section import StaircaseSystem, certify_conservativity, staircase_escape_closed_form, symmetric_boxes

    w = _width(cfg)
    d = _direction(cfg.get("direction", "1/3"))
    ms = [int(m) for m in cfg["m_values"]] if "m_values" in cfg else list(range(1, int(_need(cfg, "m_max")) + 1))
    boxes = symmetric_boxes(ms)
    rep = certify_conservativity(StaircaseSystem(w, d), boxes, _q(cfg.get("epsilon", "1/100")))
    out.csv("boxes.csv", ["m", "size", "escape", "closed_form"],
            [(m, size, e, staircase_escape_closed_form(w, b))
             for m, size, e, b in zip(ms, rep.sizes, rep.escapes, boxes)])
    out.json("summary.json", {
        "epsilon": rep.epsilon,
        "certified_from_m": ms[rep.certified_from] if rep.certified_from is not None else None,
        "satisfied": rep.satisfied,
        "disclaimer": rep.disclaimer,
    })


def run_sigma(cfg, out: Output):
    from .singular import sigma_set

    w, d, N = _width(cfg), _direction(_need(cfg, "direction")), int(_need(cfg, "N"))
    S = sigma_set(w, d, N)
    rows = [(p.level, p.x, ";".join(f"{lv}:{tag}" for lv, tag in p.atoms), p.blocking) for p in S.all()]
    out.csv("sigma.csv", ["level", "x", "atoms", "blocking"], rows)


def run_partition(cfg, out: Output):
    from .singular import SaddleConnectionFound, continuity_partition, detect_saddle

    w, d = _width(cfg), _direction(_need(cfg, "direction"))
    N, ell = int(_need(cfg, "N")), int(_need(cfg, "ell"))
    try:
        part = continuity_partition(w, d, N, ell)
    except SaddleConnectionFound as exc:
        out.csv("partition.csv", ["level", "a", "b", "length"], [])
        out.json("summary.json", {"saddle": True, "min_gap": Fraction(0), "witness": repr(exc.witness)})
        return
    out.csv("partition.csv", ["level", "a", "b", "length"],
            [(iv.level, iv.a, iv.b, iv.length) for iv in part.intervals])
    out.json("summary.json", {"saddle": detect_saddle(w, d, N, ell) is not None,
                              "min_gap": part.min_gap, "intervals": len(part.intervals)})


def _pair(cfg, N):
    from .observables import family_member

    j, n = _need(cfg, "pair")
    q = int(cfg.get("q", 3))
    return family_member(N, int(j), q), family_member(N, int(n), q)


def run_hopf(cfg, out: Output):
    from .observables import hopf_average
    from .section import StaircaseSystem

    w, d = _width(cfg), _direction(_need(cfg, "direction"))
    N, ell = int(_need(cfg, "N")), int(_need(cfg, "ell"))
    hj, hn = _pair(cfg, N)
    cps = [int(c) for c in cfg["checkpoints"]] if "checkpoints" in cfg else None
    rep = hopf_average(StaircaseSystem(w, d), hj, hn, _point(_need(cfg, "start")), ell,
                       int(cfg.get("sign", 1)), cps, out.backend)
    out.csv("hopf.csv", ["ell", "numerator", "denominator", "ratio", "target", "deviation"],
            [tuple(float(v) if isinstance(v, Fraction) and i else v for i, v in enumerate(row))
             for row in rep.rows()])
    out.json("summary.json", {"target": rep.target, "truncated": rep.truncated})


def run_uniform(cfg, out: Output):
    from .coding import random_ring_points
    from .observables import uniform_hopf_profile
    from .section import StaircaseSystem

    w, d, N = _width(cfg), _direction(_need(cfg, "direction")), int(_need(cfg, "N"))
    hj, hn = _pair(cfg, N)
    grid = random_ring_points(N, int(cfg.get("grid", 256)), int(cfg.get("seed", 0)))
    prof = uniform_hopf_profile(StaircaseSystem(w, d), hj, hn, [int(v) for v in _need(cfg, "ells")], grid,
                                int(cfg.get("sign", 1)))
    out.csv("uniform.csv", ["ell", "sup_deviation"], zip(prof.ells, prof.sup_deviation))
    out.json("summary.json", {"skipped": prof.skipped})


def run_generic_check(cfg, out: Output):
    from .observables import genericity_scale_check
    from .singular import perturb_ring

    N, ell = int(_need(cfg, "N")), int(_need(cfg, "ell"))
    w_r = _width(cfg, "w_ringed")
    w = perturb_ring(w_r, N, _q(cfg["epsilon"])) if "epsilon" in cfg else _width(cfg)
    dirs = [_direction(s) for s in _need(cfg, "directions")]
    rep = genericity_scale_check(w_r, w, dirs, N, ell, _real(_need(cfg, "gamma")))
    data = rep.as_dict()
    out.csv("generic.csv", ["property", "passes"], [(k, data[k]) for k in ("A0", "A1", "A2", "A3")])
    out.json("summary.json", data)


def run_maharam(cfg, out: Output):
    from .maharam import MaharamMeasure, maharam_invariance_check, quotient_base, solve_conformal

    w, d = _width(cfg), _direction(_need(cfg, "direction"))
    skew = quotient_base(w, d)
    a = _real(cfg.get("a", 0))
    cells = int(cfg.get("cells", 2 ** 14))
    depth = int(cfg.get("depth", 10))
    tol = _real(cfg.get("tol", "1/10000000000"))
    mu = solve_conformal(skew, a, cells, tol, int(cfg.get("max_iter", 10_000)))
    out.csv("density.csv", ["component", "cell_left", "cell_right", "density"], mu.rows())
    out.json("summary.json", {
        "a": a, "cells": cells, "depth": depth, "tol": tol, "iterations": mu.iterations,
        "method": mu.method, "residual": mu.residual,
        "invariance": maharam_invariance_check(skew, MaharamMeasure(mu), depth),
    })


def run_windtree_orbit(cfg, out: Output):
    from .windtree import Configuration, Hit, WindtreeTable, chain_point

    g = Configuration.from_json(_need(cfg, "configuration"))
    theta = tuple(_q(v) for v in _need(cfg, "theta"))
    table = WindtreeTable(g, theta, _q(cfg["R_max"]) if "R_max" in cfg else None)
    st = _need(cfg, "start")
    center = tuple(_q(v) for v in st["center"])
    q = int(st["quadrant"])
    t = _q(st["s_coord"])
    P, _ = chain_point(center, table.r, q, t)
    b = table.state_at(center, P, table.dirs[q])
    rows = []
    stop = "budget"
    for i in range(1, int(_need(cfg, "steps")) + 1):
        o = table.step(b)
        if not isinstance(o, Hit):
            stop = type(o).__name__
            break
        b = o.point
        c = table.index.center_of(b.tree_index)
        rows.append((i, b.tree_index, c[0], c[1], b.s_coord, b.quadrant, o.flight_length))
    out.csv("windtree_orbit.csv", ["step", "tree_index", "center_x", "center_y", "s_coord", "quadrant",
                                   "flight_length"], rows)
    out.json("summary.json", {"steps": len(rows), "termination": stop})


def _scan_one(w, N, ell, slope, pair, hopf_ell, start):
    from .observables import hopf_average
    from .section import StaircaseSystem
    from .singular import SaddleConnectionFound, continuity_partition, detect_saddle, separation_iota
    from .staircase import Direction

    d = Direction(slope, 1)
    saddle = detect_saddle(w, d, N, ell) is not None
    eta = iota = dev = None
    if not saddle:
        try:
            eta = continuity_partition(w, d, N, ell).min_gap
            iota = separation_iota(w, d, N, ell)
        except (SaddleConnectionFound, ValueError):
            saddle = True
    if not saddle and pair is not None:
        rep = hopf_average(StaircaseSystem(w, d), pair[0], pair[1], start, hopf_ell)
        if rep.ratio:
            dev = abs(rep.ratio[-1] / float(rep.target) - 1)
    return (slope, saddle, eta, iota, dev)


def theta_scan(w, N: int, ell: int, slopes: Sequence[Fraction], pair=None, hopf_ell: int = 10_000,
               start=None, threads: int = 1, saddle_radius=0) -> List[tuple]:
    """One row per slope: (slope, saddle flag, eta, iota, relative Hopf deviation, near saddle).

    ``near saddle`` marks slopes within ``saddle_radius`` of a scanned slope
    carrying a short saddle connection; the radius is left to the caller.
    """
    from .staircase import SectionPoint

    radius = as_fraction(saddle_radius)
    if radius < 0:
        raise ValueError("saddle_radius must be >= 0")
    start = start or SectionPoint(0, Fraction(1, 3))
    jobs = sorted(set(as_fraction(s) for s in slopes))
    fn = lambda s: _scan_one(w, N, ell, s, pair, hopf_ell, start)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(fn, jobs))
    else:
        rows = [fn(s) for s in jobs]
    bad = [r[0] for r in rows if r[1]]
    return [r + (any(abs(r[0] - b) <= radius for b in bad),) for r in rows]


THETA_HEADER = ["slope", "saddle", "eta", "iota", "hopf_dev", "near_saddle"]


def run_theta_scan(cfg, out: Output):
    w, N, ell = _width(cfg), int(_need(cfg, "N")), int(_need(cfg, "ell"))
    pair = _pair(cfg, N) if "pair" in cfg else None
    start = _point(cfg["start"]) if "start" in cfg else None
    rows = theta_scan(w, N, ell, [_q(s) for s in _need(cfg, "slopes")], pair,
                      int(cfg.get("hopf_ell", 10_000)), start, out.threads, _q(cfg.get("saddle_radius", "0")))
    out.csv("theta_scan.csv", THETA_HEADER, rows)


COMMANDS: Dict[str, Callable] = {
    "orbit": run_orbit,
    "boxes": run_boxes,
    "sigma": run_sigma,
    "partition": run_partition,
    "hopf": run_hopf,
    "uniform": run_uniform,
    "generic-check": run_generic_check,
    "maharam": run_maharam,
    "windtree-orbit": run_windtree_orbit,
    "theta-scan": run_theta_scan,
}


def run(kind: str, config_path: str, out_dir: str, threads: int = 1, backend: str = "rational") -> int:
    from .maharam import NonConvergence

    try:
        cfg = load_config(config_path)
        out = Output(out_dir, kind, cfg, threads, backend)
        COMMANDS[kind](cfg, out)
        out.finish()
        return 0
    except NonConvergence as exc:
        return _fail("NonConvergence", str(exc), residuals=exc.residuals[-10:])
    except (ConfigError, InvalidScalar, KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        return _fail(type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail("OSError", str(exc))


def _fail(kind: str, message: str, **extra) -> int:
    print(json.dumps(dict({"error": kind, "message": message}, **extra), sort_keys=True), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="infdyn", description="Exact experiments on staircases and wind-trees.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--backend", choices=["rational", "float64"], default="rational")
    args = ap.parse_args(argv)
    return run(args.command, args.config, args.out, max(1, args.threads), args.backend)


if __name__ == "__main__":
    sys.exit(main())
