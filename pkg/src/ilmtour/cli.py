"""Command-line front end for the tour design pipeline.

Every subcommand writes file-based, reproducible outputs plus a run
manifest recording the command, configuration, catalog hash, package
versions, and wall time.  Exit codes: 0 success, 2 domain failures
(no connection found, transfer non-convergence), 1 usage errors.
"""

from __future__ import annotations

import argparse
import csv as _csv
import hashlib
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import constants, __version__
from .bodies import (PropulsionParams, get_body, load_catalog,
                     soi_radius, system_for, MOON_ABBREV)
from .cr3bp import Cr3bpModel

__all__ = ["main"]

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2

_J2000 = datetime(2000, 1, 1, 12, tzinfo=timezone.utc)


class DomainError(RuntimeError):
    """Well-formed request with no feasible answer (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_epoch(text: str) -> float:
    """Seconds past J2000 of an ISO date, or a raw float of seconds."""
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text).replace(tzinfo=timezone.utc)
    return (dt - _J2000).total_seconds()


def _catalog_hash(path) -> str:
    if path is None:
        return "builtin"
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2) + "\n",
                          encoding="utf-8")


def _write_manifest(out_paths, args, t_start):
    """One manifest per output directory, named run_manifest.json."""
    outs = [Path(p).resolve() for p in out_paths if p is not None]
    man = {
        "command": " ".join(sys.argv[1:]) or args.command,
        "config": {k: v for k, v in vars(args).items()
                   if k != "func" and not callable(v)},
        "catalog_hash": _catalog_hash(getattr(args, "catalog", None)),
        "versions": {"ilmtour": __version__,
                     "python": sys.version.split()[0],
                     "numpy": np.__version__},
        "wall_time_s": time.monotonic() - t_start,
        "outputs": [str(p) for p in outs],
    }
    for d in {p.parent for p in outs}:
        _write_json(d / "run_manifest.json", man)
    return man


def _emit(args, payload, t_start, schema=None):
    if getattr(args, "out", None):
        _write_json(args.out, payload)
        _write_manifest([args.out], args, t_start)
    else:
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")


# --------------------------------------------------------- subcommands

def cmd_bodies(args, t_start):
    cat = load_catalog(args.catalog)
    rows = []
    for b in cat:
        row = {"name": b.name, "gm_km3_s2": b.gm, "radius_km": b.radius_eq,
               "j2": b.j2, "d_km": b.orbit_radius_d,
               "period_day": b.period, "ecc": b.ecc, "incl_deg": b.incl}
        if b.name != "Saturn":
            sys_p = system_for(b.name, catalog=cat)
            row["soi_km"] = soi_radius(sys_p)
        rows.append(row)
    if args.format == "csv" and args.out:
        keys = list(rows[-1].keys())
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = _csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
        _write_manifest([args.out], args, t_start)
    else:
        _emit(args, {"bodies": rows}, t_start)
    return EXIT_OK


def cmd_lagrange(args, t_start):
    model = Cr3bpModel(system_for(args.system,
                                  catalog=load_catalog(args.catalog)))
    pts = {p.label: {"x": p.pos[0], "y": p.pos[1],
                     "cj": p.cj} for p in model.lagrange_points()}
    for label in ("L1", "L2"):
        print(f"{args.system} x_{label} = {pts[label]['x']:.7f}  "
              f"C_J = {pts[label]['cj']:.7f}")
    _emit(args, {"system": args.system, "points": pts}, t_start)
    return EXIT_OK


def cmd_halo_family(args, t_start):
    from .halo import continue_family, family_to_json
    model = Cr3bpModel(system_for(args.system,
                                  catalog=load_catalog(args.catalog)))
    fam = continue_family(model, args.point, args.family,
                          count=args.count)
    text = family_to_json(fam)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _write_manifest([args.out], args, t_start)
    else:
        sys.stdout.write(text)
    print(f"{args.system} {args.point} {args.family}: {args.count} "
          f"members, C_J {fam.cj_grid[0]:.6f} .. {fam.cj_grid[-1]:.6f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_manifold(args, t_start):
    from .halo import continue_family, seed_manifolds
    model = Cr3bpModel(system_for(args.system,
                                  catalog=load_catalog(args.catalog)))
    fam = continue_family(model, args.point, args.family,
                          count=args.count)
    halo = fam.members[-args.index]       # index 1 = highest C_J
    seeds = seed_manifolds(model, halo, n_points=args.n_points,
                           stability=args.stability, branch=args.branch)
    rows = [{"point_index": s.point_index, "t_along": s.t_along,
             "state": list(s.state)} for s in seeds]
    _emit(args, {"system": args.system, "point": args.point,
                 "family": args.family, "orbit_index": args.index,
                 "stability": args.stability, "branch": args.branch,
                 "cj": halo.cj, "period": halo.period,
                 "seeds": rows}, t_start)
    return EXIT_OK


def _serialize_result(res) -> dict:
    out = res.__dict__.copy()
    for k, v in out.items():
        if isinstance(v, np.ndarray):
            out[k] = [repr(float(x)) for x in v]  # full precision
    return out


def _deserialize_result(d):
    from .connections import ConnectionResult
    d = dict(d)
    for k in ("dep_seed_state", "arr_seed_state",
              "dep_section_state", "arr_section_state"):
        d[k] = np.array([float(x) for x in d[k]])
    return ConnectionResult(**d)


def cmd_connect(args, t_start):
    from .connections import (CONNECTION_TYPES, connection_report,
                              search_connection)
    from .halo import continue_family
    if args.type not in CONNECTION_TYPES:
        raise DomainError(f"unknown connection type {args.type!r}")
    ct = CONNECTION_TYPES[args.type]
    model = Cr3bpModel(system_for(args.system,
                                  catalog=load_catalog(args.catalog)))
    dep_fam = continue_family(model, ct.dep_point, ct.dep_family)
    arr_fam = dep_fam if ct.homoclinic else \
        continue_family(model, ct.arr_point, ct.arr_family)
    search = search_connection(model, ct, dep_fam, arr_fam,
                               n_seeds=args.n_seeds,
                               dr_tol_km=args.dr_tol)
    report = connection_report(search)
    if not search.found:
        _emit(args, report, t_start)
        raise DomainError(
            f"no {args.type} connection in {args.system} at "
            f"position tolerance {args.dr_tol} km")
    pick = search.best if args.select == "min-dv" else \
        min(search.ranked, key=lambda r: r.cj)
    report["selected"] = _serialize_result(pick)
    _emit(args, report, t_start)
    b = search.best
    print(f"{args.system} type {args.type}: dr = {b.delta_r_km:.3f} km, "
          f"dv = {b.delta_v_ms:.2f} m/s, dT = {b.delta_t_hours:.2f} h",
          file=sys.stderr)
    return EXIT_OK


def cmd_coverage(args, t_start):
    from .connections import connection_trajectory
    from .coverage import (map_to_csv, metrics_to_dict, moon_centered,
                           overflight_map, polar_metrics)
    doc = json.loads(Path(args.connection).read_text(encoding="utf-8"))
    if doc.get("selected") is None:
        raise DomainError(f"{args.connection} holds no connection")
    res = _deserialize_result(doc["selected"])
    model = Cr3bpModel(system_for(res.system,
                                  catalog=load_catalog(args.catalog)))
    t_n, y_n = connection_trajectory(model, res)
    t_s, states = moon_centered(model, t_n, y_n)
    radius = model.system.secondary.radius_eq
    cmap = overflight_map(t_s, states, radius, grid_deg=args.grid,
                          dt=args.dt)
    metrics = polar_metrics(cmap, t_s, states, radius)
    map_to_csv(args.out, cmap)
    payload = metrics_to_dict(metrics)
    payload.update({"system": res.system, "type": res.conn_type})
    metrics_path = args.metrics or str(Path(args.out).with_suffix("") )\
        + "_metrics.json"
    _write_json(metrics_path, payload)
    _write_manifest([args.out, metrics_path], args, t_start)
    print(f"{res.system} {res.conn_type}: coverage = "
          f"{metrics.surface_coverage:.1f}%, NP visibility = "
          f"{metrics.np_visibility:.2f} h", file=sys.stderr)
    return EXIT_OK


def cmd_rank_perturbations(args, t_start):
    from .ephemeris import KeplerianEphemeris
    from .nbody import PerturbationConfig, rank_perturbations
    provider = KeplerianEphemeris.from_catalog()
    rep = rank_perturbations(args.leg, PerturbationConfig(provider),
                             epoch=_parse_epoch(args.epoch),
                             rtol=args.rtol, atol=args.rtol)
    _emit(args, rep.to_dict(), t_start)
    return EXIT_OK


def cmd_transfer(args, t_start):
    from .ephemeris import KeplerianEphemeris
    from .qlaw import QLawWeights, TuningFailedError, design_leg
    weights = None
    if args.weights != "auto":
        try:
            weights = QLawWeights(*(float(x) for x in
                                    args.weights.split(",")))
        except (TypeError, ValueError) as exc:
            raise DomainError(f"bad weight vector {args.weights!r}: "
                              f"{exc}")
    provider = KeplerianEphemeris.from_catalog()
    try:
        res, dep, arr = design_leg(
            getattr(args, "from"), args.to, provider, weights=weights,
            epoch=_parse_epoch(args.epoch), n_screen=args.budget,
            rtol=args.rtol, atol=args.rtol)
    except TuningFailedError as exc:
        raise DomainError(str(exc))
    hist_path = None
    if args.out:
        hist_path = str(Path(args.out).with_suffix("")) + "_history.csv"
        with open(hist_path, "w", newline="", encoding="utf-8") as fh:
            w = _csv.writer(fh)
            w.writerow(["t_s", "a_km", "e", "i_rad", "raan_rad",
                        "argp_rad"])
            w.writerows(res.history.tolist())
    payload = {
        "leg": f"{getattr(args, 'from')}-{args.to}",
        "delta_v_ms": res.delta_v_ms,
        "delta_t_day": res.delta_t_day,
        "delta_m_kg": res.delta_m_kg,
        "revolutions": res.revolutions,
        "converged": res.converged,
        "departure": {"point": dep.point, "family": dep.family,
                      "orbit_index": dep.orbit_index,
                      "seed_index": dep.seed_index,
                      "dt_soi_day": dep.dt_soi_s / constants.DAY_S},
        "arrival": {"point": arr.point, "family": arr.family,
                    "orbit_index": arr.orbit_index,
                    "seed_index": arr.seed_index,
                    "dt_soi_day": arr.dt_soi_s / constants.DAY_S},
        "history_csv": hist_path,
    }
    _emit(args, payload, t_start)
    return EXIT_OK


def cmd_reference(args, t_start):
    from .tour import reference_hohmann, reference_spiral
    a, b = getattr(args, "from"), args.to
    dv_h, dt_h, dm_h = reference_hohmann(a, b, m0=args.m0)
    dv_s, dt_s, dm_s = reference_spiral(a, b, m0=args.m0)
    payload = {
        "leg": f"{a}-{b}",
        "hohmann": {"delta_v_ms": dv_h, "delta_t_day": dt_h,
                    "delta_m_kg": dm_h, "isp_s": 300.0},
        "spiral": {"delta_v_ms": dv_s, "delta_t_day": dt_s,
                   "delta_m_kg": dm_s},
    }
    print(f"{a}-{b}  Hohmann: {dv_h:7.1f} m/s  {dt_h:6.2f} d  "
          f"{dm_h:6.1f} kg   spiral: {dv_s:7.1f} m/s  {dt_s:6.1f} d  "
          f"{dm_s:5.1f} kg")
    _emit(args, payload, t_start)
    return EXIT_OK


def cmd_tour(args, t_start):
    from .tour import (MassDepletedError, PhaseSpec, TourPlan,
                       assemble_tour)
    doc = json.loads(Path(args.plan).read_text(encoding="utf-8"))
    phases = tuple(
        PhaseSpec(p["kind"], tuple(p["params"]), p.get("repeats", 1))
        for p in doc["phases"])
    plan = TourPlan(phases, m0=doc.get("m0", 1000.0),
                    epoch=_parse_epoch(str(doc.get(
                        "epoch", constants.EPOCH_2042_01_01))),
                    m_dry=doc.get("m_dry", 0.0))

    class _Row:
        def __init__(self, d):
            self.__dict__.update(d)

    inputs = doc.get("inputs", {})
    legs = {tuple(k.split("-")): _Row(v)
            for k, v in inputs.get("legs", {}).items()}
    conns = {tuple(k.split("-")): _Row(v)
             for k, v in inputs.get("connections", {}).items()}
    sois = {tuple(k.split("-")): v
            for k, v in inputs.get("soi_times", {}).items()}
    try:
        budget = assemble_tour(plan, legs, connections=conns,
                               soi_times=sois)
    except (KeyError, MassDepletedError) as exc:
        raise DomainError(f"tour assembly failed: {exc}")
    _emit(args, {"phases": budget.rows()}, t_start)
    t = budget.totals
    print(f"total: dv = {t.delta_v_ms:.0f} m/s, thrust = "
          f"{t.thrust_day:.0f} d, dm = {t.delta_m_kg:.1f} kg, "
          f"final mass = {t.m_final_kg:.1f} kg", file=sys.stderr)
    return EXIT_OK


# -------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--catalog", default=None,
                   help="plain-text body catalog file (default builtin)")
    p.add_argument("--out", default=None, help="output file path")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--seed", type=int, default=0,
                   help="RNG seed for stochastic screening stages")
    p.add_argument("--threads", type=int, default=None,
                   help="worker pool bound for parallel stages")


def build_parser() -> _Parser:
    top = _Parser(prog="ilmtour",
                  description="Saturn inner-moon tour design toolkit")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    def new(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        _add_common(p)
        p.set_defaults(func=fn)
        return p

    new("bodies", cmd_bodies, help="catalog table with SOI radii")

    p = new("lagrange", cmd_lagrange, help="equilibrium points")
    p.add_argument("--system", required=True)

    p = new("halo-family", cmd_halo_family, help="halo orbit family")
    p.add_argument("--system", required=True)
    p.add_argument("--point", choices=("L1", "L2"), default="L1")
    p.add_argument("--family", choices=("north", "south"),
                   default="north")
    p.add_argument("--count", type=int, default=25)

    p = new("manifold", cmd_manifold, help="invariant manifold seeds")
    p.add_argument("--system", required=True)
    p.add_argument("--point", choices=("L1", "L2"), default="L1")
    p.add_argument("--family", choices=("north", "south"),
                   default="north")
    p.add_argument("--index", type=int, default=1,
                   help="1-based family member, high C_J first")
    p.add_argument("--count", type=int, default=25)
    p.add_argument("--stability", choices=("stable", "unstable"),
                   default="unstable")
    p.add_argument("--branch", choices=("inner", "outer"),
                   default="inner")
    p.add_argument("--n-points", type=int, default=100)

    p = new("connect", cmd_connect,
            help="homoclinic/heteroclinic connection search")
    p.add_argument("--system", required=True)
    p.add_argument("--type", required=True, help="A..F")
    p.add_argument("--n-seeds", type=int, default=100)
    p.add_argument("--dr-tol", type=float, default=1.0,
                   help="position mismatch acceptance [km]")
    p.add_argument("--select", choices=("min-dv", "low-cj"),
                   default="min-dv",
                   help="which accepted connection to serialize")

    p = new("coverage", cmd_coverage, help="surface overflight map")
    p.add_argument("--connection", required=True,
                   help="JSON written by connect")
    p.add_argument("--dt", type=float, default=60.0)
    p.add_argument("--grid", type=float, default=1.0)
    p.add_argument("--metrics", default=None,
                   help="metrics JSON path (default <out>_metrics.json)")

    p = new("rank-perturbations", cmd_rank_perturbations,
            help="perturbation relevance ranking for a leg")
    p.add_argument("--leg", required=True, help="for example Rh-Di")
    p.add_argument("--epoch", default="2042-01-01")
    p.add_argument("--rtol", type=float, default=1e-11)

    p = new("transfer", cmd_transfer, help="low-thrust inter-moon leg")
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--weights", default="auto",
                   help="'auto' or w1,w2,w3,w4")
    p.add_argument("--budget", type=int, default=3,
                   help="screened endpoint pairs to propagate")
    p.add_argument("--epoch", default="2042-01-01")
    p.add_argument("--rtol", type=float, default=1e-9)

    p = new("reference", cmd_reference,
            help="Hohmann and tangential-spiral comparison")
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--m0", type=float, default=1000.0)

    p = new("tour", cmd_tour, help="end-to-end budget assembly")
    p.add_argument("--plan", required=True, help="plan JSON file")

    return top


def main(argv=None) -> int:
    t_start = time.monotonic()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, t_start)
    except DomainError as exc:
        print(f"ilmtour {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
