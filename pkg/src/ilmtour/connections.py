"""Homoclinic and heteroclinic connections between halo orbits.

Unstable-manifold arcs of a departure halo are flown forward and
stable-manifold arcs of an arrival halo backward until they reach a
Poincare section; pairs of section states that agree in position within
a tolerance are accepted and ranked by the velocity mismatch, which is
the single impulsive cost of the connection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cr3bp import Cr3bpModel
from .halo import HaloFamily, HaloOrbit, seed_manifolds
from .propagator import EventSpec, IntegratorConfig, propagate

__all__ = [
    "PoincareSection", "ConnectionType", "SectionHit", "ConnectionResult",
    "ConnectionSearch", "SECTIONS", "CONNECTION_TYPES",
    "pair_halos", "section_states", "search_connection",
    "connection_trajectory", "connection_report", "clear_section_cache",
]

_ARC_CFG = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-12)

# feasibility floor: arcs dipping below this altitude over the moon are
# discarded, matching the halo-family continuation floor
FLOOR_ALT_KM = 20.0


@dataclass(frozen=True)
class PoincareSection:
    """One of the three planar sections used for the connection search.

    S1: y = 0 half-plane beyond the moon (x < mu - 1)
    S2: x = mu - 1 plane through the moon
    S3: y = 0 half-plane on the Saturn side of the moon (x > mu - 1)
    """

    name: str

    def event(self, model: Cr3bpModel, count: int) -> EventSpec:
        x_moon = model.mu - 1.0
        if self.name == "S2":
            return EventSpec("x_plane", value=x_moon, count=count,
                             terminal=True)
        op = "<" if self.name == "S1" else ">"
        return EventSpec("y_plane", count=count, terminal=True,
                         constraint=(0, op, x_moon))

    def residual(self, model: Cr3bpModel, state) -> float:
        if self.name == "S2":
            return float(state[0] - (model.mu - 1.0))
        return float(state[1])


SECTIONS = {name: PoincareSection(name) for name in ("S1", "S2", "S3")}


@dataclass(frozen=True)
class ConnectionType:
    """Departure/arrival halo classes, matching section and crossing count.

    same_point pairs halos of identical Jacobi constant (connections around
    one equilibrium point exist only at matched energy); otherwise each
    departure halo is paired with the closest-C_J arrival halo.
    """

    tag: str
    dep_point: str
    dep_family: str
    arr_point: str
    arr_family: str
    section: str
    crossing: int            # which accepted section crossing is used

    @property
    def same_point(self) -> bool:
        return self.dep_point == self.arr_point

    @property
    def homoclinic(self) -> bool:
        return (self.dep_point == self.arr_point
                and self.dep_family == self.arr_family)


CONNECTION_TYPES = {
    "A": ConnectionType("A", "L1", "north", "L2", "north", "S2", 2),
    "B": ConnectionType("B", "L1", "north", "L2", "south", "S2", 1),
    "C": ConnectionType("C", "L1", "north", "L1", "south", "S1", 1),
    "D": ConnectionType("D", "L2", "south", "L2", "north", "S3", 1),
    "E": ConnectionType("E", "L1", "north", "L1", "north", "S1", 1),
    "F": ConnectionType("F", "L2", "south", "L2", "south", "S3", 1),
}


@dataclass(frozen=True)
class SectionHit:
    seed_index: int
    t_along: float           # departure time along the orbit [normalized]
    t: float                 # signed flight time from the seed [normalized]
    state: np.ndarray        # 6-state on the section
    seed_state: np.ndarray


@dataclass(frozen=True)
class ConnectionResult:
    conn_type: str
    system: str
    cj: float
    section: str
    dep_orbit_index: int
    arr_orbit_index: int
    dep_seed_index: int
    arr_seed_index: int
    delta_r_km: float
    delta_v_ms: float
    delta_t_hours: float     # full departure-to-arrival flight time
    t_unstable: float        # forward leg duration [normalized]
    t_stable: float          # backward leg duration, magnitude [normalized]
    dep_seed_state: np.ndarray
    arr_seed_state: np.ndarray
    dep_section_state: np.ndarray
    arr_section_state: np.ndarray


@dataclass(frozen=True)
class ConnectionSearch:
    conn_type: str
    system: str
    best: ConnectionResult | None
    ranked: tuple            # all accepted results, increasing delta_v
    n_pairs: int             # halo pairs examined
    n_arcs: int              # manifold arcs flown to the section
    n_rejected: int          # arcs lost to the altitude floor or time cap

    @property
    def found(self) -> bool:
        return self.best is not None


def pair_halos(dep_family: HaloFamily, arr_family: HaloFamily,
               same_point: bool) -> list:
    """Match departure and arrival halos by Jacobi constant.

    same_point demands exactly equal grid values; otherwise each departure
    member takes the closest arrival member.
    """
    if not dep_family.members or not arr_family.members:
        raise ValueError("cannot pair empty halo families")
    arr_cj = arr_family.cj_grid
    pairs = []
    for dep in dep_family.members:
        k = int(np.argmin(np.abs(arr_cj - dep.cj)))
        if same_point and abs(arr_cj[k] - dep.cj) > 1e-9:
            raise ValueError(
                f"no arrival halo matches C_J = {dep.cj:.9f}; same-point "
                "pairing needs families on a common C_J grid")
        pairs.append((dep, arr_family.members[k]))
    return pairs


_SECTION_CACHE: dict = {}


def clear_section_cache():
    _SECTION_CACHE.clear()


def _default_t_cap(model: Cr3bpModel) -> float:
    # ten revolutions of the rotating frame; longer arcs are chaotic
    # moon encounters of no use as clean connections
    return 10.0 * 2.0 * math.pi / model.n


def section_states(model: Cr3bpModel, halo: HaloOrbit,
                   section: PoincareSection, crossing: int, stability: str,
                   branch: str = "inner", n_points: int = 100,
                   t_cap: float | None = None,
                   config: IntegratorConfig | None = None):
    """Section states of one manifold of one halo.

    Returns (hits, n_rejected): unstable seeds are flown forward, stable
    seeds backward, each until the requested section crossing.  Arcs that
    dip below the altitude floor over the moon or exceed t_cap are
    rejected and only counted.
    """
    if t_cap is None:
        t_cap = _default_t_cap(model)
    cfg = config or _ARC_CFG
    key = (halo.system, halo.point, halo.family, halo.index,
           round(halo.cj, 12), stability, branch, section.name, crossing,
           n_points, round(t_cap, 9), cfg.rel_tol, cfg.abs_tol)
    if key in _SECTION_CACHE:
        return _SECTION_CACHE[key]

    seeds = seed_manifolds(model, halo, n_points=n_points,
                           stability=stability, branch=branch)
    out = _fly_to_section(model, halo, seeds, section, crossing, stability,
                          t_cap, cfg)
    _SECTION_CACHE[key] = out
    return out


def _fly_to_section(model, halo, seeds, section, crossing, stability,
                    t_cap, cfg):
    sys = model.system
    floor = (sys.secondary.radius_eq + FLOOR_ALT_KM) / sys.length_unit
    floor_ev = EventSpec("altitude", center=tuple(model.secondary_pos),
                         radius=floor, terminal=True)
    sec_ev = section.event(model, crossing)
    sign = 1.0 if stability == "unstable" else -1.0
    hits, rejected = [], 0
    for seed in seeds:
        traj = propagate(model, seed.state, (0.0, sign * t_cap), cfg,
                         events=[sec_ev, floor_ev])
        if traj.status != "event" or traj.terminal_index != 0:
            rejected += 1
            continue
        cross = [c for c in traj.crossings if c.event == 0][-1]
        hits.append(SectionHit(seed.point_index, float(seed.t_along),
                               float(cross.t), np.asarray(cross.y, float),
                               seed.state))
    return hits, rejected


def _mismatch(sys, dep_hits, arr_hits):
    """Pairwise position [km] and velocity [m/s] gaps on the section."""
    du = np.array([h.state for h in dep_hits])
    st = np.array([h.state for h in arr_hits])
    dr = np.linalg.norm(du[:, None, :3] - st[None, :, :3], axis=2)
    dv = np.linalg.norm(du[:, None, 3:] - st[None, :, 3:], axis=2)
    return dr * sys.length_unit, dv * sys.velocity_unit * 1e3


def _select(dr_km, dv_ms, dr_tol_km):
    """Lexicographic pick: min delta_v among feasible, else min delta_r."""
    ok = dr_km <= dr_tol_km
    if ok.any():
        masked = np.where(ok, dv_ms, np.inf)
        i, j = np.unravel_index(np.argmin(masked), masked.shape)
    else:
        i, j = np.unravel_index(np.argmin(dr_km), dr_km.shape)
    return i, j


def _refine_pair(model, ct, dep, arr, section, hit_u, hit_s, dr_tol_km,
                 n_seeds, t_cap, cfg, levels=4, n_sub=13, shrink=6.0):
    """Polish one candidate by subdividing the seed times of both arcs.

    Each level re-seeds both manifolds on a window spanning the previous
    level's seed spacing around the current best pair, so the effective
    resolution multiplies by the shrink factor per level.
    """
    sys = model.system
    w_u, w_s = dep.period / n_seeds, arr.period / n_seeds
    cu, cs = hit_u.t_along, hit_s.t_along
    best = None
    offs = np.linspace(-shrink, shrink, n_sub)
    for _ in range(levels):
        w_u /= shrink
        w_s /= shrink
        su = seed_manifolds(model, dep, stability="unstable",
                            times=cu + offs * w_u)
        ss = seed_manifolds(model, arr, stability="stable",
                            times=cs + offs * w_s)
        hu, _ = _fly_to_section(model, dep, su, section, ct.crossing,
                                "unstable", t_cap, cfg)
        hs, _ = _fly_to_section(model, arr, ss, section, ct.crossing,
                                "stable", t_cap, cfg)
        if not hu or not hs:
            break
        dr_km, dv_ms = _mismatch(sys, hu, hs)
        i, j = _select(dr_km, dv_ms, dr_tol_km)
        cu, cs = hu[i].t_along, hs[j].t_along
        best = (hu[i], hs[j], float(dr_km[i, j]), float(dv_ms[i, j]))
    return best


def _build_result(sys, ct, dep, arr, hit_u, hit_s, dr_km, dv_ms, n_seeds):
    t_u, t_s = hit_u.t, abs(hit_s.t)
    return ConnectionResult(
        conn_type=ct.tag, system=dep.system, cj=dep.cj, section=ct.section,
        dep_orbit_index=dep.index, arr_orbit_index=arr.index,
        dep_seed_index=int(round(hit_u.t_along / dep.period * n_seeds))
        % n_seeds,
        arr_seed_index=int(round(hit_s.t_along / arr.period * n_seeds))
        % n_seeds,
        delta_r_km=dr_km, delta_v_ms=dv_ms,
        delta_t_hours=(t_u + t_s) * sys.time_unit / 3600.0,
        t_unstable=t_u, t_stable=t_s,
        dep_seed_state=hit_u.seed_state, arr_seed_state=hit_s.seed_state,
        dep_section_state=hit_u.state, arr_section_state=hit_s.state)


def search_connection(model: Cr3bpModel, conn_type, dep_family: HaloFamily,
                      arr_family: HaloFamily, n_seeds: int = 100,
                      dr_tol_km: float = 1.0, refine: bool = True,
                      t_cap: float | None = None,
                      config: IntegratorConfig | None = None
                      ) -> ConnectionSearch:
    """Search one connection type over two halo families.

    For every C_J-matched halo pair the two manifolds are sampled with
    n_seeds arcs each; pairs of section states closer than dr_tol_km are
    accepted and the smallest-delta_v one per halo pair is kept, after an
    optional local subdivision polish of the most promising coarse pair.
    Returns the search with results ranked by delta_v; best is None when
    nothing connects within tolerance.
    """
    if isinstance(conn_type, str):
        conn_type = CONNECTION_TYPES[conn_type]
    ct = conn_type
    for fam, pt, br in ((dep_family, ct.dep_point, ct.dep_family),
                        (arr_family, ct.arr_point, ct.arr_family)):
        if fam.point != pt or fam.family != br:
            raise ValueError(
                f"type {ct.tag} needs {pt}/{br} halos, got "
                f"{fam.point}/{fam.family}")
    section = SECTIONS[ct.section]
    pairs = pair_halos(dep_family, arr_family, ct.same_point)
    sys = model.system
    if t_cap is None:
        t_cap = _default_t_cap(model)
    cfg = config or _ARC_CFG

    results, n_arcs, n_rejected = [], 0, 0
    for dep, arr in pairs:
        dep_hits, rej_u = section_states(
            model, dep, section, ct.crossing, "unstable",
            n_points=n_seeds, t_cap=t_cap, config=cfg)
        arr_hits, rej_s = section_states(
            model, arr, section, ct.crossing, "stable",
            n_points=n_seeds, t_cap=t_cap, config=cfg)
        n_arcs += 2 * n_seeds
        n_rejected += rej_u + rej_s
        if not dep_hits or not arr_hits:
            continue
        dr_km, dv_ms = _mismatch(sys, dep_hits, arr_hits)
        candidates = [_select(dr_km, dv_ms, dr_tol_km)]
        imin = np.unravel_index(np.argmin(dr_km), dr_km.shape)
        if imin != candidates[0]:
            candidates.append(imin)
        picks = [(dep_hits[i], arr_hits[j],
                  float(dr_km[i, j]), float(dv_ms[i, j]))
                 for i, j in candidates]
        if refine:
            for k, (hu, hs, _, _) in enumerate(list(picks)):
                pol = _refine_pair(model, ct, dep, arr, section, hu, hs,
                                   dr_tol_km, n_seeds, t_cap, cfg)
                if pol is not None:
                    picks.append(pol)
        # lexicographic winner for this halo pair
        feas = [p for p in picks if p[2] <= dr_tol_km]
        if not feas:
            continue
        hu, hs, dr, dv = min(feas, key=lambda p: p[3])
        results.append(_build_result(sys, ct, dep, arr, hu, hs, dr, dv,
                                     n_seeds))
    results.sort(key=lambda r: r.delta_v_ms)
    return ConnectionSearch(
        conn_type=ct.tag, system=dep_family.system,
        best=results[0] if results else None, ranked=tuple(results),
        n_pairs=len(pairs), n_arcs=n_arcs, n_rejected=n_rejected)


def connection_trajectory(model: Cr3bpModel, result: ConnectionResult,
                          config: IntegratorConfig | None = None):
    """Sampled states of the full connection, departure seed to arrival seed.

    The forward leg runs from the departure seed to the section; the
    return leg continues from the arrival-manifold section state (where
    the impulsive delta_v is applied) up to the arrival seed.
    """
    cfg = config or _ARC_CFG
    leg1 = propagate(model, result.dep_seed_state,
                     (0.0, result.t_unstable), cfg)
    leg2 = propagate(model, result.arr_section_state,
                     (0.0, result.t_stable), cfg)
    t = np.concatenate([leg1.t, result.t_unstable + leg2.t])
    y = np.vstack([leg1.y, leg2.y])
    return t, y


def connection_report(search: ConnectionSearch) -> dict:
    """JSON-ready summary of a connection search."""
    out = {
        "type": search.conn_type,
        "system": search.system,
        "pairs_searched": search.n_pairs,
        "arcs_flown": search.n_arcs,
        "arcs_rejected": search.n_rejected,
        "connections_found": len(search.ranked),
    }
    if search.best is None:
        out["connection"] = None
        return out
    b = search.best
    out["connection"] = {
        "cj": b.cj,
        "section": b.section,
        "dep_orbit_index": b.dep_orbit_index,
        "arr_orbit_index": b.arr_orbit_index,
        "dep_seed_index": b.dep_seed_index,
        "arr_seed_index": b.arr_seed_index,
        "delta_r_km": b.delta_r_km,
        "delta_v_ms": b.delta_v_ms,
        "delta_t_hours": b.delta_t_hours,
    }
    return out
