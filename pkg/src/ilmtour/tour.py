"""End-to-end tour budget assembly and reference transfers.

Stitches the precomputed pieces (science connections, halo-to-SOI
ballistic legs, powered inter-moon transfers) into a sequential budget
with mass and epoch bookkeeping, and computes the classical comparison
transfers: two-impulse Hohmann and the tangential low-thrust spiral
between coplanar circular moon orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import constants
from .bodies import PropulsionParams, get_body, MOON_ABBREV

__all__ = [
    "MassDepletedError",
    "PhaseSpec",
    "PhaseBudget",
    "TourPlan",
    "TourBudget",
    "MOON_ORDER",
    "halo_to_soi_time",
    "soi_time_table",
    "assemble_tour",
    "reference_hohmann",
    "reference_spiral",
]

# tour visits the moons inward
MOON_ORDER = ("Rh", "Di", "Te", "En", "Mi")



class MassDepletedError(RuntimeError):
    """Spacecraft mass fell below the dry floor mid-tour."""


@dataclass(frozen=True)
class PhaseSpec:
    """One tour phase.

    kind "science": params (system, type), repeats loops of the
    connection.  kind "soi-leg": params (system, point, stability).
    kind "transfer": params (from, to).
    """

    kind: str
    params: tuple
    repeats: int = 1

    def __post_init__(self):
        if self.kind not in ("science", "soi-leg", "transfer"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True)
class TourPlan:
    phases: tuple
    m0: float = 1000.0
    epoch: float = constants.EPOCH_2042_01_01
    m_dry: float = 0.0

    def __post_init__(self):
        visited = [p.params[0] for p in self.phases
                   if p.kind == "transfer"]
        order = [m for m in MOON_ORDER if m in visited]
        if visited != order:
            raise ValueError(f"transfer order {visited} does not follow "
                             f"the inward moon sequence {MOON_ORDER}")


@dataclass(frozen=True)
class PhaseBudget:
    name: str
    epoch_start: float        # seconds past reference epoch
    delta_t_day: float
    delta_v_ms: float
    thrust_day: float
    delta_m_kg: float
    m_final_kg: float


@dataclass(frozen=True)
class TourBudget:
    phases: tuple
    totals: PhaseBudget

    def rows(self) -> list:
        out = [p.__dict__.copy() for p in self.phases]
        out.append(self.totals.__dict__.copy())
        return out


def halo_to_soi_time(trajectory, time_unit: float) -> float:
    """Flight time [day] of a manifold leg ending on the SOI sphere.

    time_unit converts the trajectory's normalized time to seconds.
    """
    if trajectory.t.size and trajectory.t_final == trajectory.t[0]:
        return 0.0
    if trajectory.status != "event":
        raise ValueError("trajectory did not terminate on the SOI event")
    dt = abs(trajectory.t_final - trajectory.t[0])
    return dt * time_unit / constants.DAY_S


def soi_time_table(exits: list) -> dict:
    """Min/max halo-to-SOI flight time [day] over SOI exit states."""
    if not exits:
        raise ValueError("empty exit-state list")
    days = [e.dt_soi_s / constants.DAY_S for e in exits]
    return {"min_day": min(days), "max_day": max(days),
            "n_states": len(days)}


def assemble_tour(plan: TourPlan, legs: dict, connections: dict = None,
                  soi_times: dict = None) -> TourBudget:
    """Sequential mass/epoch bookkeeping over the plan's phases.

    legs maps (from, to) to objects with delta_v_ms, delta_t_day and
    delta_m_kg.  connections maps (system, type) to objects with
    delta_t_hours; their cost is booked at zero, as are halo-to-SOI
    legs, whose durations come from soi_times keyed
    (system, point, stability) in days.
    """
    connections = connections or {}
    soi_times = soi_times or {}
    m = plan.m0
    t = plan.epoch
    out = []
    for ph in plan.phases:
        if ph.kind == "transfer":
            leg = legs[ph.params]
            dv, dt = leg.delta_v_ms, leg.delta_t_day
            dm, thrust = leg.delta_m_kg, leg.delta_t_day
            name = f"{ph.params[0]}-{ph.params[1]} transfer"
        elif ph.kind == "science":
            conn = connections[ph.params]
            dt = ph.repeats * conn.delta_t_hours / 24.0
            dv = dm = thrust = 0.0
            name = f"{ph.params[0]} science ({ph.params[1]})" + \
                (f" x{ph.repeats}" if ph.repeats > 1 else "")
        else:
            dt = soi_times[ph.params]
            dv = dm = thrust = 0.0
            name = "{0} {1} {2} SOI leg".format(*ph.params)
        m_next = m - dm
        if m_next < plan.m_dry:
            raise MassDepletedError(
                f"mass {m_next:.1f} kg below dry floor {plan.m_dry} kg "
                f"after phase {name!r}")
        out.append(PhaseBudget(name, t, dt, dv, thrust, dm, m_next))
        m = m_next
        t += dt * constants.DAY_S
    totals = PhaseBudget(
        "total", plan.epoch,
        sum(p.delta_t_day for p in out),
        sum(p.delta_v_ms for p in out),
        sum(p.thrust_day for p in out),
        sum(p.delta_m_kg for p in out),
        m)
    return TourBudget(tuple(out), totals)


# ------------------------------------------------- reference transfers

def _circular_radii(moon_a: str, moon_b: str):
    gm = get_body("Saturn").gm
    r1 = get_body(MOON_ABBREV.get(moon_a, moon_a)).orbit_radius_d
    r2 = get_body(MOON_ABBREV.get(moon_b, moon_b)).orbit_radius_d
    return gm, r1, r2


def reference_hohmann(moon_a: str, moon_b: str, isp: float = 300.0,
                      m0: float = 1000.0):
    """Two-impulse transfer between circular coplanar moon orbits.

    Returns (delta_v m/s, delta_t day, delta_m kg).
    """
    gm, r1, r2 = _circular_radii(moon_a, moon_b)
    a_t = 0.5 * (r1 + r2)
    dv1 = abs(math.sqrt(gm * (2.0 / r1 - 1.0 / a_t))
              - math.sqrt(gm / r1))
    dv2 = abs(math.sqrt(gm / r2)
              - math.sqrt(gm * (2.0 / r2 - 1.0 / a_t)))
    dv = (dv1 + dv2) * 1e3
    dt = math.pi * math.sqrt(a_t ** 3 / gm) / constants.DAY_S
    dm = m0 * (1.0 - math.exp(-dv / (constants.G0 * isp)))
    return dv, dt, dm


def reference_spiral(moon_a: str, moon_b: str,
                     propulsion: PropulsionParams = None,
                     m0: float = 1000.0):
    """Tangential low-thrust circle-to-circle transfer.

    The classical spiral result: delta-v equals the difference of the
    circular speeds; duration follows from the constant mass flow at
    maximum thrust.  Returns (delta_v m/s, delta_t day, delta_m kg).
    """
    prop = propulsion or PropulsionParams()
    gm, r1, r2 = _circular_radii(moon_a, moon_b)
    dv = abs(math.sqrt(gm / r1) - math.sqrt(gm / r2)) * 1e3
    dm = m0 * (1.0 - math.exp(-dv / (prop.g0 * prop.isp)))
    dt = dm / prop.mdot / constants.DAY_S
    return dv, dt, dm
