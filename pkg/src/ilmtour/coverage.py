"""Surface-coverage analysis of science orbits over a moon.

Works in the moon-centered synodic frame (the moons are tidally locked,
so that frame is body-fixed up to libration): instantaneous latitude
coverage bands, gridded overflight-time maps on a spherical surface, and
polar-cap visibility metrics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .cr3bp import Cr3bpModel

__all__ = [
    "BelowSurfaceError", "CoverageSample", "CoverageMap", "CoverageMetrics",
    "moon_centered", "instant_band", "coverage_samples", "overflight_map",
    "polar_metrics", "map_to_csv", "metrics_to_dict",
]


class BelowSurfaceError(ValueError):
    """Trajectory sample at or below the moon mean sphere."""


@dataclass(frozen=True)
class CoverageSample:
    t: float                 # [s]
    h: float                 # altitude above the mean sphere [km]
    phi: float               # sub-spacecraft latitude [deg]
    lambda1: float           # lower band limit [deg]
    lambda2: float           # upper band limit [deg]
    speed: float             # speed relative to the moon [km/s]


@dataclass(frozen=True)
class CoverageMap:
    lam: np.ndarray          # cell-center longitudes [deg], ascending
    beta: np.ndarray         # cell-center latitudes [deg], ascending
    tau: np.ndarray          # overflight time per cell [hour], (beta, lam)
    dt: float                # sampling step [s]
    time_of_flight: float    # [hour]

    @property
    def surface_coverage(self) -> float:
        return 100.0 * float(np.count_nonzero(self.tau > 0)) / self.tau.size


@dataclass(frozen=True)
class CoverageMetrics:
    surface_coverage: float  # [%]
    time_of_flight: float    # [hour]
    np_visibility: float     # [hour]
    sp_visibility: float     # [hour]
    max_np_revisit: float    # [hour]
    max_sp_revisit: float    # [hour]
    cap_half_angle: float    # [deg]


def moon_centered(model: Cr3bpModel, t, states):
    """Normalized synodic trajectory -> moon-centered, dimensional.

    Returns (t [s], states [km, km/s]) with positions relative to the
    moon; the rotating frame is kept, which for a tidally locked moon is
    its body-fixed frame.
    """
    sys = model.system
    states = np.atleast_2d(np.asarray(states, float)).copy()
    states[:, :3] -= model.secondary_pos
    states[:, :3] *= sys.length_unit
    states[:, 3:] *= sys.velocity_unit
    return np.asarray(t, float) * sys.time_unit, states


def instant_band(state, radius: float):
    """(Lambda1, Lambda2, alpha, h, phi) of one moon-centered state [km].

    The instrument sees the spherical cap of half-angle
    alpha = acos(R / (R + h)) around the sub-spacecraft point, so the
    covered latitudes are phi -/+ alpha.
    """
    pos = np.asarray(state, float)[:3]
    r = float(np.linalg.norm(pos))
    if r <= radius:
        raise BelowSurfaceError(f"|pos| = {r:.3f} km <= R = {radius:.3f} km")
    h = r - radius
    phi = math.degrees(math.asin(pos[2] / r))
    alpha = math.degrees(math.acos(radius / (radius + h)))
    return phi - alpha, phi + alpha, alpha, h, phi


def _resample(t_s, states, dt):
    """Cubic Hermite resampling (positions with velocity derivatives)."""
    t_s = np.asarray(t_s, float)
    states = np.asarray(states, float)
    keep = np.concatenate([[True], np.diff(t_s) > 0.0])
    t_s, states = t_s[keep], states[keep]
    n = max(2, int(math.floor((t_s[-1] - t_s[0]) / dt)) + 1)
    tq = t_s[0] + dt * np.arange(n)
    pos = CubicHermiteSpline(t_s, states[:, :3], states[:, 3:])(tq)
    vel = CubicHermiteSpline(t_s, states[:, :3], states[:, 3:],
                             ).derivative()(tq)
    return tq, pos, vel


def coverage_samples(t_s, states, radius: float, dt: float = 60.0):
    """CoverageSample series on a uniform dt grid."""
    tq, pos, vel = _resample(t_s, states, dt)
    out = []
    for k in range(len(tq)):
        lam1, lam2, _, h, phi = instant_band(pos[k], radius)
        out.append(CoverageSample(float(tq[k]), h, phi, lam1, lam2,
                                  float(np.linalg.norm(vel[k]))))
    return out


def overflight_map(t_s, states, radius: float, grid_deg: float = 1.0,
                   dt: float = 60.0) -> CoverageMap:
    """Accumulated overflight time per surface cell.

    A cell is visible at a time step iff the central angle between its
    center and the sub-spacecraft point is at most alpha (equivalent to
    elevation >= 0 on a sphere); visible cells collect dt each step.
    """
    tq, pos, _ = _resample(t_s, states, dt)
    lam = np.arange(-180.0 + grid_deg / 2.0, 180.0, grid_deg)
    beta = np.arange(-90.0 + grid_deg / 2.0, 90.0, grid_deg)
    lam_r, beta_r = np.radians(lam), np.radians(beta)
    # unit normals of all cell centers, (n_beta, n_lam, 3) flattened
    cb, sb = np.cos(beta_r)[:, None], np.sin(beta_r)[:, None]
    cl, sl = np.cos(lam_r)[None, :], np.sin(lam_r)[None, :]
    cells = np.stack(np.broadcast_arrays(cb * cl, cb * sl,
                                         sb + 0.0 * cl), axis=-1)
    cells = cells.reshape(-1, 3)

    r = np.linalg.norm(pos, axis=1)
    if np.any(r <= radius):
        raise BelowSurfaceError("trajectory sample below the mean sphere")
    u = pos / r[:, None]
    cos_alpha = radius / r
    tau = np.zeros(cells.shape[0])
    # chunk the (cells x time) product to bound memory
    step = max(1, int(2e8 // cells.shape[0]))
    for k0 in range(0, len(tq), step):
        sl_ = slice(k0, min(k0 + step, len(tq)))
        vis = cells @ u[sl_].T >= cos_alpha[None, sl_]
        tau += dt * vis.sum(axis=1)
    tof = (len(tq) * dt) / 3600.0
    return CoverageMap(lam=lam, beta=beta,
                       tau=(tau / 3600.0).reshape(len(beta), len(lam)),
                       dt=dt, time_of_flight=tof)


def polar_metrics(cov_map: CoverageMap, t_s, states, radius: float,
                  cap_half_angle: float = 5.0) -> CoverageMetrics:
    """Polar-cap visibility and revisit metrics of one trajectory.

    A cap is in view when its nearest point is within the coverage cap:
    angular distance from the sub-spacecraft point to the pole minus the
    cap half-angle is at most alpha.
    """
    dt = cov_map.dt
    tq, pos, _ = _resample(t_s, states, dt)
    r = np.linalg.norm(pos, axis=1)
    phi = np.degrees(np.arcsin(pos[:, 2] / r))
    alpha = np.degrees(np.arccos(radius / r))

    def cap_stats(colat):
        vis = colat - cap_half_angle <= alpha
        total = float(vis.sum()) * dt / 3600.0
        gaps = _longest_gap(vis) * dt / 3600.0
        return total, gaps

    np_total, np_gap = cap_stats(90.0 - phi)
    sp_total, sp_gap = cap_stats(90.0 + phi)
    tof = len(tq) * dt / 3600.0
    return CoverageMetrics(
        surface_coverage=cov_map.surface_coverage, time_of_flight=tof,
        np_visibility=np_total, sp_visibility=sp_total,
        max_np_revisit=np_gap if np_total > 0 else tof,
        max_sp_revisit=sp_gap if sp_total > 0 else tof,
        cap_half_angle=cap_half_angle)


def _longest_gap(visible) -> int:
    """Longest run of invisible steps between (or around) visible ones."""
    idx = np.flatnonzero(visible)
    if idx.size == 0:
        return int(len(visible))
    runs = [idx[0], len(visible) - 1 - idx[-1]]
    if idx.size > 1:
        runs.append(int(np.max(np.diff(idx)) - 1))
    return int(max(runs))


def map_to_csv(path, cov_map: CoverageMap):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lambda_deg", "beta_deg", "tau_hour"])
        for i, b in enumerate(cov_map.beta):
            for j, l in enumerate(cov_map.lam):
                w.writerow([f"{l:.3f}", f"{b:.3f}",
                            f"{cov_map.tau[i, j]:.6f}"])


def metrics_to_dict(metrics: CoverageMetrics) -> dict:
    return {
        "surface_coverage_pct": metrics.surface_coverage,
        "time_of_flight_hour": metrics.time_of_flight,
        "np_visibility_hour": metrics.np_visibility,
        "sp_visibility_hour": metrics.sp_visibility,
        "max_np_revisit_hour": metrics.max_np_revisit,
        "max_sp_revisit_hour": metrics.max_sp_revisit,
        "cap_half_angle_deg": metrics.cap_half_angle,
    }
