"""Low-thrust guidance for inter-moon legs.

A Lyapunov-style control law steers continuous thrust to reduce a
weighted quadratic error over the osculating elements (a, e, i, argp):

    Q = w1 (a - a*)^2 + w2 (e a - e* a*)^2 + w3 (i - i*)^2
        + w4 [e acos(cos(argp - argp*))]^2

The thrust direction in the RSW frame is opposite R^T grad Q, where R is
the 4x3 Gauss variational matrix of element rates with respect to the
thrust acceleration components.  The ascending node is untargeted: for
near-circular, near-equatorial moon orbits its adjustment amounts to a
phase correction, and phasing is out of scope.

The module also screens halo-manifold exit states at the moons' spheres
of influence to pick endpoints for the powered legs, and tunes the
weights with a derivative-free simplex search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from . import constants
from .bodies import PropulsionParams, get_body, soi_radius, system_for
from .cr3bp import Cr3bpModel
from .frames import (InertialState, OrbitalElements, cart_to_kep,
                     rsw_axes_from_state, synodic_to_inertial)
from .halo import continue_family, seed_manifolds
from .nbody import PerturbationConfig, make_eom
from .propagator import EventSpec, IntegratorConfig, propagate

__all__ = [
    "E_CIRC",
    "QLawWeights",
    "TargetElements",
    "TransferResult",
    "SoiExitState",
    "TuningFailedError",
    "error_q",
    "grad_q",
    "gauss_matrix",
    "thrust_direction",
    "propagate_transfer",
    "soi_exit_states",
    "screen_pairs",
    "leg_config",
    "design_leg",
    "tune_weights",
    "LEG_WEIGHTS",
]

# below this eccentricity the argument of periapsis is numerically
# undefined; the w4 term is frozen (treated as met)
E_CIRC = 1e-4

# published tuned weight vectors, kept as regression anchors
LEG_WEIGHTS = {
    ("Rh", "Di"): (2.651, 0.442, 0.045, 0.356),
    ("Di", "Te"): (2.458, 0.409, 0.042, 0.306),
    ("Te", "En"): (2.403, 0.401, 0.041, 0.293),
    ("En", "Mi"): (2.521, 0.421, 0.043, 0.322),
}


class TuningFailedError(RuntimeError):
    """No simplex evaluation produced a convergent transfer."""


@dataclass(frozen=True)
class QLawWeights:
    w1: float
    w2: float
    w3: float
    w4: float

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3, self.w4) <= 0.0:
            raise ValueError("all weights must be positive")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3, self.w4])


@dataclass(frozen=True)
class TargetElements:
    """Targeted osculating elements with terminal tolerances.

    tol_a is relative to a_star; tol_ea bounds |e a - e* a*| as a
    fraction of a_star; tol_i is absolute [rad]; tol_w bounds the
    e-weighted shortest angular distance in argp [rad].
    """

    a_star: float
    e_star: float
    i_star: float
    argp_star: float
    tol_a: float = 1e-3
    tol_ea: float = 1e-3
    tol_i: float = math.radians(0.05)
    tol_w: float = 1e-3

    def __post_init__(self):
        if self.a_star <= 0.0:
            raise ValueError("target semi-major axis must be positive")

    @classmethod
    def from_elements(cls, el: OrbitalElements, **tols) -> "TargetElements":
        return cls(el.a, el.e, el.i, el.argp, **tols)

    def residual_ratios(self, el: OrbitalElements) -> np.ndarray:
        """Element errors scaled so a value <= 1 means within tolerance."""
        d_w = _arc_distance(el.argp - self.argp_star)
        r4 = 0.0 if el.e < E_CIRC else el.e * d_w / self.tol_w
        return np.array([
            abs(el.a - self.a_star) / (self.tol_a * self.a_star),
            abs(el.e * el.a - self.e_star * self.a_star)
            / (self.tol_ea * self.a_star),
            abs(el.i - self.i_star) / self.tol_i,
            r4,
        ])

    def met(self, el: OrbitalElements) -> bool:
        return bool(np.all(self.residual_ratios(el) <= 1.0))


@dataclass(frozen=True)
class TransferResult:
    delta_v_ms: float
    delta_t_day: float
    delta_m_kg: float
    revolutions: float
    history: np.ndarray       # rows (t_s, a, e, i, raan, argp)
    converged: bool
    m_final_kg: float = 0.0


def _arc_distance(dw: float) -> float:
    """Shortest angular distance acos(cos(dw)), in [0, pi]."""
    return math.acos(min(1.0, max(-1.0, math.cos(dw))))


def _arc_sign(dw: float) -> float:
    """Derivative of the shortest angular distance with respect to dw.

    Sign of sin(dw); zero at the antipode, where the one-sided limits
    disagree and the contribution is dropped to avoid chatter.
    """
    s = math.sin(dw)
    return 0.0 if s == 0.0 else math.copysign(1.0, s)


def error_q(el: OrbitalElements, target: TargetElements,
            w: QLawWeights) -> float:
    d_w = _arc_distance(el.argp - target.argp_star)
    return (w.w1 * (el.a - target.a_star) ** 2
            + w.w2 * (el.e * el.a - target.e_star * target.a_star) ** 2
            + w.w3 * (el.i - target.i_star) ** 2
            + w.w4 * (el.e * d_w) ** 2)


def grad_q(el: OrbitalElements, target: TargetElements,
           w: QLawWeights) -> np.ndarray:
    """Analytic dQ/d(a, e, i, argp)."""
    da = el.a - target.a_star
    dea = el.e * el.a - target.e_star * target.a_star
    dw = el.argp - target.argp_star
    d_w = _arc_distance(dw)
    g = np.zeros(4)
    g[0] = 2.0 * w.w1 * da + 2.0 * w.w2 * dea * el.e
    g[1] = 2.0 * w.w2 * dea * el.a
    g[2] = 2.0 * w.w3 * (el.i - target.i_star)
    if el.e >= E_CIRC:
        g[1] += 2.0 * w.w4 * el.e * d_w ** 2
        g[3] = 2.0 * w.w4 * el.e ** 2 * d_w * _arc_sign(dw)
    return g


def gauss_matrix(el: OrbitalElements, gm: float) -> np.ndarray:
    """4x3 matrix of d(a, e, i, argp)-rates w.r.t. RSW thrust accel.

    Standard Gauss variational equations for (a, e, i, argp).  The argp
    row is zeroed below E_CIRC where periapsis is undefined, and its
    node-coupling term is dropped for equatorial orbits.
    """
    if not (0.0 <= el.e < 1.0):
        raise ValueError("gauss_matrix requires 0 <= e < 1")
    p = el.a * (1.0 - el.e ** 2)
    h = math.sqrt(gm * p)
    ct, st = math.cos(el.ta), math.sin(el.ta)
    r = p / (1.0 + el.e * ct)
    u = el.argp + el.ta
    m = np.zeros((4, 3))
    m[0, 0] = 2.0 * el.a ** 2 / h * el.e * st
    m[0, 1] = 2.0 * el.a ** 2 / h * p / r
    m[1, 0] = p * st / h
    m[1, 1] = ((p + r) * ct + r * el.e) / h
    m[2, 2] = r * math.cos(u) / h
    if el.e >= E_CIRC:
        m[3, 0] = -p * ct / (h * el.e)
        m[3, 1] = (p + r) * st / (h * el.e)
        si = math.sin(el.i)
        if abs(si) > 1e-12:
            m[3, 2] = -r * math.sin(u) * math.cos(el.i) / (h * si)
    return m


def thrust_direction(el: OrbitalElements, target: TargetElements,
                     w: QLawWeights, gm: float):
    """Unit thrust direction in RSW minimizing dQ/dt, or None to coast."""
    d = gauss_matrix(el, gm).T @ grad_q(el, target, w)
    nrm = np.linalg.norm(d)
    if nrm < 1e-300:
        return None
    return -d / nrm


# -------------------------------------------------------- powered legs

def _guidance(target: TargetElements, w: QLawWeights, gm: float,
              t_max: float):
    def thrust(t, y):
        el = cart_to_kep(InertialState(y[:3], y[3:6]), gm)
        u = thrust_direction(el, target, w, gm)
        if u is None:
            return None
        axes = rsw_axes_from_state(y[:3], y[3:6])
        return t_max * (axes.T @ u)
    return thrust


def propagate_transfer(state0: InertialState, m0: float,
                       target: TargetElements, w: QLawWeights,
                       propulsion: PropulsionParams,
                       config: PerturbationConfig,
                       epoch: float = constants.EPOCH_2042_01_01,
                       t_cap_s: float | None = None,
                       rtol: float = 1e-9, atol: float = 1e-9,
                       n_history: int = 4000) -> TransferResult:
    """Closed-loop constant-thrust transfer to the target elements.

    The thrust direction is re-evaluated at every integrator stage.
    Terminates when all element tolerances are met (converged) or the
    duration cap is reached (not converged).  Delta-v follows from the
    rocket equation at constant specific impulse.
    """
    gm = get_body("Saturn").gm
    el0 = cart_to_kep(state0, gm)
    if t_cap_s is None:
        # three times the tangential-spiral reference time for the task
        dv_ref = abs(math.sqrt(gm / el0.a) - math.sqrt(gm / target.a_star))
        dv_ref = max(dv_ref, 0.05)
        dm_ref = m0 * (1.0 - math.exp(-dv_ref * 1e3
                                      / (propulsion.g0 * propulsion.isp)))
        t_cap_s = 3.0 * dm_ref / propulsion.mdot
    eom = make_eom(config, thrust=_guidance(target, w, gm,
                                            propulsion.t_max),
                   propulsion=propulsion)

    def converged_event(t, y):
        el = cart_to_kep(InertialState(y[:3], y[3:6]), gm)
        return float(np.max(target.residual_ratios(el))) - 1.0

    converged_event.terminal = True
    converged_event.direction = -1.0
    y0 = np.concatenate([state0.pos, state0.vel, [m0]])
    if converged_event(epoch, y0) <= 0.0:
        hist = np.array([[epoch, el0.a, el0.e, el0.i, el0.raan, el0.argp]])
        return TransferResult(0.0, 0.0, 0.0, 0.0, hist, True, m0)
    sol = solve_ivp(eom, (epoch, epoch + t_cap_s), y0, method="DOP853",
                    rtol=rtol, atol=atol, events=converged_event,
                    dense_output=True)
    if not sol.success:
        raise RuntimeError(f"transfer propagation failed: {sol.message}")
    t_end = sol.t_events[0][0] if sol.t_events[0].size else sol.t[-1]
    converged = bool(sol.t_events[0].size)
    ts = np.linspace(epoch, t_end, n_history)
    ys = sol.sol(ts)
    m_f = float(ys[6, -1])
    dv = propulsion.g0 * propulsion.isp * math.log(m0 / m_f)  # m/s
    hist = np.empty((n_history, 6))
    hist[:, 0] = ts
    for k in range(n_history):
        ek = cart_to_kep(InertialState(ys[:3, k], ys[3:6, k]), gm)
        hist[k, 1:] = (ek.a, ek.e, ek.i, ek.raan, ek.argp)
    revs = abs(float(np.unwrap(np.arctan2(ys[1], ys[0]))[-1]
                     - math.atan2(ys[1, 0], ys[0, 0]))) / (2.0 * math.pi)
    return TransferResult(dv, (t_end - epoch) / constants.DAY_S,
                          m0 - m_f, revs, hist, converged, m_f)


# ----------------------------------------------- manifold exit states

@dataclass(frozen=True)
class SoiExitState:
    system: str
    point: str
    family: str
    orbit_index: int          # 1-based, descending in C_J
    seed_index: int
    stability: str
    dt_soi_s: float           # flight time halo -> SOI, always positive
    state: InertialState      # SCI, synodic x-axis aligned at crossing
    elements: OrbitalElements


_SOI_CFG = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-12)


def soi_exit_states(model: Cr3bpModel, family, stability: str,
                    n_points: int = 20, orbit_stride: int = 5,
                    f: float = 4.5, t_cap: float | None = None,
                    config: IntegratorConfig | None = None) -> list:
    """Manifold states at the SOI sphere, as Saturn-centered elements.

    Outward-branch seeds of every orbit_stride-th family member are
    flown (forward for unstable, backward for stable) to the sphere of
    influence; each crossing state is rotated to the Saturn-centered
    inertial frame with the synodic x-axis aligned at the crossing
    instant, where the osculating elements are evaluated.
    """
    sys = model.system
    r_soi = soi_radius(sys, f) / sys.length_unit
    ev = EventSpec(kind="sphere", center=(model.mu - 1.0, 0.0, 0.0),
                   radius=r_soi, direction=+1, terminal=True)
    if t_cap is None:
        t_cap = 20.0 * 2.0 * math.pi / model.n
    cfg = config or _SOI_CFG
    sign = 1.0 if stability == "unstable" else -1.0
    out = []
    for halo in family.members[::orbit_stride]:
        try:
            seeds = seed_manifolds(model, halo, n_points=n_points,
                                   stability=stability, branch="outer")
        except ValueError:
            continue          # linearly stable member, no manifolds
        for seed in seeds:
            traj = propagate(model, seed.state, (0.0, sign * t_cap),
                             config=cfg, events=[ev])
            if traj.status != "event":
                continue
            from .frames import SynodicState
            dt = abs(traj.t_final)
            # align the synodic x-axis with the inertial X-axis at the
            # crossing by referencing the rotation to the crossing time
            syn = SynodicState(traj.y_final[:3], traj.y_final[3:6],
                               t=traj.t_final)
            sci = synodic_to_inertial(syn, sys, t0=traj.t_final)
            el = cart_to_kep(sci, sys.primary.gm)
            out.append(SoiExitState(
                system=sys.label, point=halo.point, family=halo.family,
                orbit_index=halo.index, seed_index=seed.point_index,
                stability=stability, dt_soi_s=dt * sys.time_unit,
                state=sci, elements=el.wrapped()))
    return out


def _edelbaum_dv(el_a: OrbitalElements, el_b: OrbitalElements,
                 gm: float) -> float:
    """Cheap circle-to-circle estimate with inclination change [km/s]."""
    va = math.sqrt(gm / el_a.a)
    vb = math.sqrt(gm / el_b.a)
    di = abs(el_a.i - el_b.i)
    return math.sqrt(va * va + vb * vb
                     - 2.0 * va * vb * math.cos(0.5 * math.pi * di))


def screen_pairs(departures: list, arrivals: list,
                 n_keep: int = 20) -> list:
    """Best (departure, arrival) pairs by the analytic delta-v screen."""
    if not departures or not arrivals:
        raise ValueError("empty endpoint set")
    gm = get_body("Saturn").gm
    scored = [(_edelbaum_dv(d.elements, a.elements, gm), d, a)
              for d in departures for a in arrivals]
    scored.sort(key=lambda row: row[0])
    return scored[:n_keep]


def leg_config(moon_a: str, moon_b: str,
               provider) -> PerturbationConfig:
    """Perturbations for a powered leg per the ranking verdicts.

    Saturn oblateness and the moons' third-body pulls always; the Sun
    only on the two outermost legs, where its displacement exceeds the
    relevance thresholds.
    """
    third = ("Mi", "En", "Te", "Di", "Rh", "Ti")
    if {moon_a, moon_b} in ({"Rh", "Di"}, {"Di", "Te"}):
        third = third + ("Sun",)
    return PerturbationConfig(provider, third_body=third,
                              j2_bodies=("Saturn",))


def design_leg(moon_a: str, moon_b: str, provider,
               weights: QLawWeights | None = None,
               propulsion: PropulsionParams | None = None,
               m0: float = 1000.0,
               epoch: float = constants.EPOCH_2042_01_01,
               n_points: int = 20, orbit_stride: int = 5,
               n_screen: int = 3, n_members: int = 25,
               rtol: float = 1e-9, atol: float = 1e-9):
    """Powered inter-moon leg from screened manifold endpoints.

    Departure states leave the L1 halo families of the outer moon on
    unstable manifolds; arrival states enter the L2 families of the
    inner moon on stable manifolds.  The best screened pairs run the
    full closed-loop transfer; the lowest-delta-v convergent one wins.

    Returns (TransferResult, departure SoiExitState, arrival one).
    """
    prop = propulsion or PropulsionParams()
    w = weights or QLawWeights(*LEG_WEIGHTS.get(
        (moon_a, moon_b), (1.0, 1.0, 1.0, 1.0)))
    dep_model = Cr3bpModel(system_for("S" + moon_a))
    arr_model = Cr3bpModel(system_for("S" + moon_b))
    deps, arrs = [], []
    for fam_tag in ("north", "south"):
        dep_fam = continue_family(dep_model, "L1", fam_tag,
                                  count=n_members)
        arr_fam = continue_family(arr_model, "L2", fam_tag,
                                  count=n_members)
        deps += soi_exit_states(dep_model, dep_fam, "unstable",
                                n_points=n_points,
                                orbit_stride=orbit_stride)
        arrs += soi_exit_states(arr_model, arr_fam, "stable",
                                n_points=n_points,
                                orbit_stride=orbit_stride)
    config = leg_config(moon_a, moon_b, provider)
    best = None
    for _, dep, arr in screen_pairs(deps, arrs, n_keep=n_screen):
        target = TargetElements.from_elements(arr.elements)
        res = propagate_transfer(dep.state, m0, target, w, prop,
                                 config, epoch=epoch,
                                 rtol=rtol, atol=atol)
        if not res.converged:
            continue
        if best is None or res.delta_v_ms < best[0].delta_v_ms:
            best = (res, dep, arr)
    if best is None:
        raise TuningFailedError(
            f"no convergent {moon_a}-{moon_b} transfer among the "
            f"{n_screen} screened endpoint pairs")
    return best


def tune_weights(state0: InertialState, m0: float,
                 target: TargetElements,
                 propulsion: PropulsionParams,
                 config: PerturbationConfig,
                 w0: QLawWeights | None = None,
                 epoch: float = constants.EPOCH_2042_01_01,
                 rtol: float = 1e-9, atol: float = 1e-9,
                 max_iter: int = 40):
    """Simplex minimization of transfer time over the four weights.

    Non-convergent evaluations incur a large additive penalty so the
    simplex retreats toward the feasible region.  Returns the tuned
    weights and the best transfer.
    """
    start = (w0 or QLawWeights(1.0, 1.0, 1.0, 1.0)).vector
    cache = {}

    def objective(x):
        key = tuple(np.round(x, 12))
        if key in cache:
            return cache[key][0]
        if np.min(x) <= 0.0:
            cache[key] = (1e9, None)
            return 1e9
        res = propagate_transfer(state0, m0, target, QLawWeights(*x),
                                 propulsion, config, epoch=epoch,
                                 rtol=rtol, atol=atol)
        cost = res.delta_t_day + (0.0 if res.converged else 1e6)
        cache[key] = (cost, res)
        return cost

    sol = minimize(objective, start, method="Nelder-Mead",
                   options={"maxiter": max_iter, "xatol": 1e-3,
                            "fatol": 1e-3})
    cost, res = cache[tuple(np.round(sol.x, 12))]
    if res is None or not res.converged:
        feasible = [(c, r) for c, r in cache.values()
                    if r is not None and r.converged]
        if not feasible:
            raise TuningFailedError(
                f"all {len(cache)} simplex evaluations non-convergent")
        cost, res = min(feasible, key=lambda cr: cr[0])
        idx = [k for k, v in cache.items() if v[1] is res][0]
        return QLawWeights(*idx), res
    return QLawWeights(*sol.x), res
