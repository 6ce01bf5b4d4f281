"""Perturbed Saturn-centered propagation and perturbation ranking.

Third-body and oblateness accelerations on top of the Saturn two-body
problem, a thrust-and-mass-flow state extension, and the leg-by-leg
ranking procedure that decides which perturbations a transfer model must
keep (final-state errors against 1 km / 1 m/s thresholds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import solve_ivp

from . import constants
from .bodies import PropulsionParams, get_body
from .ephemeris import (BODY_IDS, KeplerianEphemeris, jupiter_fixed_state,
                        sun_state)
from .frames import InertialState

__all__ = [
    "PerturbationConfig", "RankingRow", "RankingReport",
    "PropellantExhaustedError", "accel_third_body", "accel_j2",
    "make_eom", "propagate_perturbed", "reference_initial_state",
    "ranking_span", "rank_perturbations", "MOON_IDS", "LEGS",
]

MOON_IDS = BODY_IDS                       # five ILMs + Titan
LEGS = (("Rh", "Di"), ("Di", "Te"), ("Te", "En"), ("En", "Mi"))

_FULL = {"Mi": "Mimas", "En": "Enceladus", "Te": "Tethys",
         "Di": "Dione", "Rh": "Rhea", "Ti": "Titan"}


class PropellantExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class PerturbationConfig:
    """Which perturbations act, and where body states come from.

    third_body ids: moon ids plus "Jupiter" and "Sun"; j2_bodies:
    "Saturn" plus moon ids.  A moon's J2 term cannot be kept when its
    third-body term is omitted.
    """

    provider: object
    third_body: tuple = MOON_IDS + ("Jupiter", "Sun")
    j2_bodies: tuple = ("Saturn",) + MOON_IDS

    def __post_init__(self):
        for b in self.j2_bodies:
            if b != "Saturn" and b not in self.third_body:
                raise ValueError(
                    f"J2 of {b} kept while its third-body term is omitted")

    def without(self, name: str) -> "PerturbationConfig":
        """Config with one named perturbation removed.

        Names: '<id> 3B' (moon ids, Jupiter, Sun) or '<body> J2'; removing
        a moon's 3B also removes its J2.
        """
        kind = name.split()[-1]
        bid = name.split()[0]
        if kind == "3B":
            return PerturbationConfig(
                self.provider,
                tuple(b for b in self.third_body if b != bid),
                tuple(b for b in self.j2_bodies if b != bid))
        return PerturbationConfig(
            self.provider, self.third_body,
            tuple(b for b in self.j2_bodies if b != bid))


def accel_third_body(r_sc, r_3, gm_3) -> np.ndarray:
    """Third-body perturbation [km/s^2]: direct minus indirect term."""
    r_sc = np.asarray(r_sc, float)
    r_3 = np.asarray(r_3, float)
    d = r_3 - r_sc
    dn = np.linalg.norm(d)
    if dn == 0.0:
        raise ValueError("spacecraft coincides with the perturbing body")
    rn = np.linalg.norm(r_3)
    return gm_3 * (d / dn**3 - r_3 / rn**3)


def accel_j2(r_rel, v_rel, gm_j, radius_j, j2_j) -> np.ndarray:
    """Oblateness perturbation [km/s^2] of one body, in the SCI frame.

    Evaluates the RSW-component bracket with the osculating inclination
    and argument of latitude of the instantaneous orbit about the body
    (spin axis taken along +z: moon equators are parallel to Saturn's),
    then maps the RSW axes back to SCI.
    """
    r = np.asarray(r_rel, float)
    v = np.asarray(v_rel, float)
    rn = np.linalg.norm(r)
    if rn <= radius_j:
        raise ValueError(f"radius {rn:.3f} km inside the oblate body")
    u_r = r / rn
    h = np.cross(r, v)
    hn = np.linalg.norm(h)
    if hn == 0.0:
        raise ValueError("degenerate (radial) orbit in accel_j2")
    u_h = h / hn
    u_t = np.cross(u_h, u_r)
    cos_i = u_h[2]
    sin_i = math.hypot(u_h[0], u_h[1])
    if sin_i > 1e-15:
        node = np.array([-u_h[1], u_h[0], 0.0]) / sin_i
        cos_u = float(node @ u_r)
        sin_u = r[2] / (rn * sin_i)
    else:
        cos_u, sin_u = 1.0, 0.0    # bracket loses its u-dependence
    fac = 3.0 * gm_j * radius_j**2 * j2_j / rn**4
    c_r = (3.0 * sin_u**2 * sin_i**2 - 1.0) / 2.0
    c_t = -sin_i**2 * sin_u * cos_u
    c_h = -sin_i * cos_i * sin_u
    return fac * (c_r * u_r + c_t * u_t + c_h * u_h)


def _perturbation(t, r, v, config, gm_cache):
    a = np.zeros(3)
    for bid in config.third_body:
        if bid == "Jupiter":
            s = jupiter_fixed_state()
            gm = constants.GM_JUPITER
        elif bid == "Sun":
            s = sun_state(t)
            gm = constants.GM_SUN
        else:
            s = config.provider.state_of(bid, t)
            gm = gm_cache[bid].gm
        a += accel_third_body(r, s.pos, gm)
    for bid in config.j2_bodies:
        body = gm_cache[bid]
        if bid == "Saturn":
            a += accel_j2(r, v, body.gm, body.radius_eq, body.j2)
        else:
            s = config.provider.state_of(bid, t)
            a += accel_j2(r - s.pos, v - s.vel, body.gm, body.radius_eq,
                          body.j2)
    return a


def make_eom(config: PerturbationConfig, thrust=None,
             propulsion: PropulsionParams | None = None,
             m_dry: float = 0.0):
    """Derivative of (r, v, m) about Saturn [km, km/s, kg].

    thrust(t, y7) returns the SCI thrust vector [N] or None for coasting;
    mass flows at |T| / (g0 Isp) regardless of direction.
    """
    prop = propulsion or PropulsionParams()
    cache = {"Saturn": get_body("Saturn")}
    for bid in MOON_IDS:
        cache[bid] = get_body(_FULL[bid])
    gm1 = cache["Saturn"].gm

    def eom(t, y):
        r, v, m = y[:3], y[3:6], y[6]
        rn = np.linalg.norm(r)
        acc = -gm1 * r / rn**3 + _perturbation(t, r, v, config, cache)
        dm = 0.0
        tvec = thrust(t, y) if thrust is not None else None
        if tvec is not None:
            tvec = np.asarray(tvec, float)
            tn = np.linalg.norm(tvec)
            if tn > 0.0:
                if m <= m_dry:
                    raise PropellantExhaustedError(
                        f"mass {m:.3f} kg at dry floor {m_dry:.3f} kg")
                acc = acc + tvec / m * 1e-3    # N/kg = m/s^2 -> km/s^2
                dm = -tn / (prop.g0 * prop.isp)
        out = np.empty(7)
        out[:3] = v
        out[3:6] = acc
        out[6] = dm
        return out

    return eom


def propagate_perturbed(y0, t_span, config, thrust=None, propulsion=None,
                        m_dry=0.0, rtol=1e-13, atol=1e-13, dense=False):
    """solve_ivp wrapper for the perturbed 7-state [km, km/s, kg, s]."""
    eom = make_eom(config, thrust, propulsion, m_dry)
    sol = solve_ivp(eom, t_span, np.asarray(y0, float), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"perturbed propagation failed: {sol.message}")
    return sol


def reference_initial_state(moon_a: str, moon_b: str) -> InertialState:
    """Planar circular start midway between the two moons' orbits."""
    ra = get_body(_FULL[moon_a]).orbit_radius_d
    rb = get_body(_FULL[moon_b]).orbit_radius_d
    x0 = 0.5 * (ra + rb)
    v0 = math.sqrt(get_body("Saturn").gm / x0)
    return InertialState([x0, 0.0, 0.0], [0.0, v0, 0.0], frame="SCI")


def ranking_span(moon_a: str, moon_b: str, x0: float) -> float:
    """Max synodic period [day] of the spacecraft against either moon."""
    gm1 = get_body("Saturn").gm
    t_sc = 2.0 * math.pi * math.sqrt(x0**3 / gm1) / constants.DAY_S
    spans = []
    for moon in (moon_a, moon_b):
        t_m = get_body(_FULL[moon]).period
        if abs(t_m - t_sc) < 1e-9 * t_m:
            raise ValueError(f"equal periods for spacecraft and {moon}: "
                             "synodic period diverges")
        spans.append(1.0 / abs(1.0 / t_sc - 1.0 / t_m))
    return max(spans)


@dataclass(frozen=True)
class RankingRow:
    name: str
    e_r: float               # [km]
    e_v: float               # [m/s]
    verdict: str             # "relevant" | "negligible"

    @property
    def log10_e_r(self) -> float:
        return math.log10(self.e_r) if self.e_r > 0 else -math.inf

    @property
    def log10_e_v(self) -> float:
        return math.log10(self.e_v) if self.e_v > 0 else -math.inf


@dataclass(frozen=True)
class RankingReport:
    leg: str
    epoch: float             # [s past J2000]
    dt_syn_day: float
    rows: tuple

    def to_dict(self) -> dict:
        return {
            "leg": self.leg, "epoch_s": self.epoch,
            "dt_syn_day": self.dt_syn_day,
            "rows": [{
                "perturbation": r.name, "e_r_km": r.e_r, "e_v_ms": r.e_v,
                "log10_e_r": r.log10_e_r, "log10_e_v": r.log10_e_v,
                "verdict": r.verdict} for r in self.rows],
        }


def ranking_names() -> list:
    names = [f"{_FULL[b]} 3B" for b in MOON_IDS]
    names += ["Jupiter 3B", "Sun 3B", "Saturn J2"]
    names += [f"{_FULL[b]} J2" for b in MOON_IDS]
    return names


def _omission_key(name: str) -> str:
    # map display name back to config ids
    for bid, full in _FULL.items():
        if name.startswith(full):
            return f"{bid} {name.split()[-1]}"
    return name


def rank_perturbations(leg, config: PerturbationConfig | None = None,
                       epoch: float = constants.EPOCH_2042_01_01,
                       rtol: float = 1e-13, atol: float = 1e-13
                       ) -> RankingReport:
    """Final-state error of omitting each perturbation over one leg.

    leg is ("Rh", "Di") or "Rh-Di".  The ballistic reference with all
    perturbations is re-propagated once per omission; errors above
    1 km or 1 m/s mark the perturbation relevant.
    """
    if isinstance(leg, str):
        moon_a, moon_b = leg.split("-")
    else:
        moon_a, moon_b = leg
    if config is None:
        config = PerturbationConfig(KeplerianEphemeris.from_catalog())
    s0 = reference_initial_state(moon_a, moon_b)
    dt_day = ranking_span(moon_a, moon_b, float(np.linalg.norm(s0.pos)))
    t_span = (epoch, epoch + dt_day * constants.DAY_S)
    y0 = np.concatenate([s0.pos, s0.vel, [1000.0]])

    ref = propagate_perturbed(y0, t_span, config, rtol=rtol, atol=atol)
    yf_ref = ref.y[:, -1]

    rows = []
    for name in ranking_names():
        trial = config.without(_omission_key(name))
        yf = propagate_perturbed(y0, t_span, trial, rtol=rtol,
                                 atol=atol).y[:, -1]
        e_r = float(np.linalg.norm(yf[:3] - yf_ref[:3]))
        e_v = float(np.linalg.norm(yf[3:6] - yf_ref[3:6])) * 1e3
        verdict = "relevant" if (e_r > 1.0 or e_v > 1.0) else "negligible"
        rows.append(RankingRow(name, e_r, e_v, verdict))
    return RankingReport(leg=f"{moon_a}-{moon_b}", epoch=epoch,
                         dt_syn_day=dt_day, rows=tuple(rows))
