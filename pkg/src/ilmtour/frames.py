"""Reference-frame rotations, element conversions and unit scaling.

Conventions
-----------
* The synodic frame is barycentric and rotates with the normalized mean
  motion n about z; Saturn sits at (+mu, 0, 0) and the moon at (mu-1, 0, 0).
  At the alignment epoch t0 the synodic axes coincide with the inertial
  ones.
* Velocity transport: for a state fixed in the rotating frame,
  v_inertial = R(t)^T (v_syn + n k x r_syn).  Worked example: the moon at
  (mu-1, 0, 0) with zero synodic velocity has inertial speed n (1 - mu),
  the circular sweep of a rigidly rotating point.
* Equatorial degeneracy (i = 0): RAAN is defined as 0 and the argument of
  periapsis is measured from the inertial x-axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bodies import SystemParams

__all__ = [
    "SynodicState",
    "InertialState",
    "OrbitalElements",
    "DegenerateOrbitError",
    "rot3",
    "rot1",
    "rot_inertial_to_synodic",
    "rot_inertial_to_rsw",
    "rsw_axes_from_state",
    "cart_to_kep",
    "kep_to_cart",
    "synodic_to_inertial",
    "inertial_to_synodic",
    "normalize_state",
    "denormalize_state",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


class DegenerateOrbitError(ValueError):
    """Raised when an orbit is too degenerate for an element conversion."""


@dataclass
class SynodicState:
    """Position/velocity in a rotating frame, normalized units."""

    pos: np.ndarray
    vel: np.ndarray
    t: float = 0.0
    frame: str = "barycentric-synodic"    # or "moon-centered-synodic"

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        if not (np.all(np.isfinite(self.pos)) and np.all(np.isfinite(self.vel))):
            raise ValueError("non-finite state components")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


@dataclass
class InertialState:
    """Position [km] / velocity [km/s] in an inertial frame."""

    pos: np.ndarray
    vel: np.ndarray
    epoch: float = 0.0            # seconds past reference epoch
    frame: str = "SCI"            # or "barycentric-inertial"

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        if not (np.all(np.isfinite(self.pos)) and np.all(np.isfinite(self.vel))):
            raise ValueError("non-finite state components")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


@dataclass
class OrbitalElements:
    """Classical osculating elements (angles in rad)."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    ta: float

    def wrapped(self) -> "OrbitalElements":
        tau = 2.0 * math.pi
        return OrbitalElements(self.a, self.e, self.i,
                               self.raan % tau, self.argp % tau, self.ta % tau)


def rot3(angle: float) -> np.ndarray:
    """Rotation matrix R3 mapping frame vectors under a z-rotation."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rot1(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rot_inertial_to_synodic(n: float, t: float, t0: float = 0.0) -> np.ndarray:
    """R3(n (t - t0)): inertial -> synodic axes; frames coincide at t0."""
    return rot3(n * (t - t0))


def rot_inertial_to_rsw(el: OrbitalElements) -> np.ndarray:
    """R3(argp + ta) R1(i) R3(raan); rows are u_r, u_theta, u_h."""
    return rot3(el.argp + el.ta) @ rot1(el.i) @ rot3(el.raan)


def rsw_axes_from_state(pos, vel) -> np.ndarray:
    """Rows u_r, u_theta, u_h built directly from a Cartesian state."""
    pos = np.asarray(pos, float)
    vel = np.asarray(vel, float)
    r = np.linalg.norm(pos)
    h = np.cross(pos, vel)
    hn = np.linalg.norm(h)
    if r == 0.0 or hn == 0.0:
        raise DegenerateOrbitError("cannot build RSW axes from a rectilinear state")
    u_r = pos / r
    u_h = h / hn
    return np.array([u_r, np.cross(u_h, u_r), u_h])


def cart_to_kep(state: InertialState, gm: float) -> OrbitalElements:
    """Osculating classical elements of a Cartesian state."""
    r_vec, v_vec = state.pos, state.vel
    r = np.linalg.norm(r_vec)
    if r == 0.0:
        raise DegenerateOrbitError("zero position vector")
    v2 = float(v_vec @ v_vec)
    h_vec = np.cross(r_vec, v_vec)
    h = np.linalg.norm(h_vec)
    if h < 1e-12 * r * math.sqrt(max(v2, gm / r)):
        raise DegenerateOrbitError("rectilinear orbit: angular momentum ~ 0")

    energy = v2 / 2.0 - gm / r
    if energy >= 0.0:
        a = -gm / (2.0 * energy) if energy != 0 else math.inf
    else:
        a = -gm / (2.0 * energy)

    e_vec = np.cross(v_vec, h_vec) / gm - r_vec / r
    e = np.linalg.norm(e_vec)

    i = math.acos(max(-1.0, min(1.0, h_vec[2] / h)))
    n_vec = np.array([-h_vec[1], h_vec[0], 0.0])
    n = np.linalg.norm(n_vec)

    tau = 2.0 * math.pi
    tiny = 1e-11
    if n < tiny * h:
        # equatorial: node undefined, measure argp from inertial x
        raan = 0.0
        ref = np.array([1.0, 0.0, 0.0])
    else:
        raan = math.atan2(n_vec[1], n_vec[0]) % tau
        ref = n_vec / n

    u_h = h_vec / h
    if e < 1e-12:
        argp = 0.0
        peri_dir = ref
    else:
        peri_dir = e_vec / e
        argp = math.atan2(float(np.cross(ref, peri_dir) @ u_h),
                          float(ref @ peri_dir)) % tau
    ta = math.atan2(float(np.cross(peri_dir, r_vec / r) @ u_h),
                    float(peri_dir @ r_vec / r)) % tau
    return OrbitalElements(a, e, i, raan, argp, ta)


def kep_to_cart(el: OrbitalElements, gm: float,
                epoch: float = 0.0, frame: str = "SCI") -> InertialState:
    """Cartesian state of classical elements (elliptic)."""
    if el.e >= 1.0:
        raise DegenerateOrbitError("kep_to_cart supports e < 1 only")
    p = el.a * (1.0 - el.e**2)
    if p <= 0:
        raise DegenerateOrbitError("non-positive semi-latus rectum")
    r = p / (1.0 + el.e * math.cos(el.ta))
    # perifocal state
    ct, st = math.cos(el.ta), math.sin(el.ta)
    r_pf = np.array([r * ct, r * st, 0.0])
    fac = math.sqrt(gm / p)
    v_pf = np.array([-fac * st, fac * (el.e + ct), 0.0])
    # perifocal -> inertial is the transpose of R3(argp) R1(i) R3(raan)
    m = (rot3(el.argp) @ rot1(el.i) @ rot3(el.raan)).T
    return InertialState(m @ r_pf, m @ v_pf, epoch=epoch, frame=frame)


_OMEGA_K = np.array([0.0, 0.0, 1.0])


def synodic_to_inertial(state: SynodicState, system: SystemParams,
                        t0: float = 0.0, target: str = "SCI") -> InertialState:
    """Dimensional inertial state of a normalized synodic state.

    target 'SCI' shifts the origin from the barycenter to Saturn
    (at +mu on the synodic x-axis) before rotating; 'barycentric-inertial'
    keeps the barycentric origin.
    """
    n = system.n_norm
    pos = state.pos.copy()
    vel = state.vel.copy()
    if target == "SCI":
        pos = pos - np.array([system.mu_ratio, 0.0, 0.0])
    rot = rot_inertial_to_synodic(n, state.t, t0)
    # v_inertial = R^T (v_syn + n k x r_syn)
    v_in = rot.T @ (vel + n * np.cross(_OMEGA_K, pos))
    r_in = rot.T @ pos
    lu, vu, tu = system.length_unit, system.velocity_unit, system.time_unit
    return InertialState(r_in * lu, v_in * vu, epoch=state.t * tu, frame=target)


def inertial_to_synodic(state: InertialState, system: SystemParams,
                        t0: float = 0.0) -> SynodicState:
    """Inverse of :func:`synodic_to_inertial` (barycentric synodic output)."""
    lu, vu, tu = system.length_unit, system.velocity_unit, system.time_unit
    t = state.epoch / tu
    n = system.n_norm
    rot = rot_inertial_to_synodic(n, t, t0)
    pos = rot @ (state.pos / lu)
    vel = rot @ (state.vel / vu) - n * np.cross(_OMEGA_K, pos)
    if state.frame == "SCI":
        pos = pos + np.array([system.mu_ratio, 0.0, 0.0])
    return SynodicState(pos, vel, t=t)


def normalize_state(pos_km, vel_kms, t_s, system: SystemParams) -> SynodicState:
    """Scale a dimensional rotating-frame state to normalized units."""
    return SynodicState(
        np.asarray(pos_km, float) / system.length_unit,
        np.asarray(vel_kms, float) / system.velocity_unit,
        t=t_s / system.time_unit,
    )


def denormalize_state(state: SynodicState, system: SystemParams):
    """Inverse of :func:`normalize_state`: (pos km, vel km/s, t s)."""
    return (
        state.pos * system.length_unit,
        state.vel * system.velocity_unit,
        state.t * system.time_unit,
    )


_CSV_HEADER = ["t", "x", "y", "z", "vx", "vy", "vz", "frame", "units"]


def write_trajectory_csv(path, ts, states, frame: str, units: str):
    """Write trajectory samples with the shared CSV schema."""
    states = np.asarray(states, float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for t, row in zip(ts, states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row[:6]]
                       + [frame, units])


def read_trajectory_csv(path):
    """Read the shared trajectory CSV schema -> (ts, states, frame, units)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected trajectory CSV header: {header}")
        ts, rows, frame, units = [], [], None, None
        for rec in rd:
            ts.append(float(rec[0]))
            rows.append([float(v) for v in rec[1:7]])
            frame, units = rec[7], rec[8]
    return np.array(ts), np.array(rows), frame, units
