"""Halo orbit families, monodromy analysis, and manifold seeding.

Families are generated by a third-order analytic first guess, a
differential corrector exploiting the xz-plane symmetry, and natural
continuation in out-of-plane amplitude with an inner solve that places
each member on a uniform Jacobi-constant grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .bodies import SystemParams
from .cr3bp import Cr3bpModel
from .propagator import (
    EventNotFoundError, EventSpec, IntegratorConfig, propagate,
    propagate_to_event,
)

__all__ = [
    "HaloOrbit", "HaloFamily", "ManifoldSeed", "Monodromy",
    "CorrectionError", "ContinuationError",
    "richardson_seed", "differential_correct", "continue_family",
    "monodromy", "seed_manifolds", "family_to_json", "family_from_json",
    "CJ_WINDOWS",
]

# default Jacobi-constant windows per system (grid endpoints for the
# 25-member families); these bracket the useful science-orbit amplitudes
# Default C_J windows for the 25-member families, shared by the four
# families (L1/L2 x north/south) of each system.  Each window covers the
# small-amplitude branch of the family down to where the periods meet the
# reference ranges below; C_J is not monotone along the full family (it
# folds back upward as the orbits shrink toward the moon), and for SDi and
# SRh the fold sits above the energy the reference period range implies,
# so their windows stop at the fold instead.
CJ_WINDOWS = {
    "SMi": (3.0043248, 3.0043649),
    "SEn": (3.0026616, 3.0027430),
    "STe": (3.0018166, 3.0021242),
    "SDi": (3.0012022, 3.0016522),
    "SRh": (3.0007997, 3.0015377),
}

# Reference halo period envelopes [hours] per system (both L1 and L2).
PERIOD_RANGES_HOURS = {
    "SMi": (10.01, 11.08),
    "SEn": (14.49, 16.07),
    "STe": (17.14, 22.13),
    "SDi": (21.72, 32.01),
    "SRh": (31.73, 52.75),
}

_CORR_CFG = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-13)


class CorrectionError(RuntimeError):
    """Differential corrector failed to converge."""


class ContinuationError(RuntimeError):
    """Family continuation hit a boundary before filling the grid."""

    def __init__(self, msg, members=()):
        super().__init__(msg)
        self.members = list(members)


@dataclass(frozen=True)
class HaloOrbit:
    system: str
    point: str               # "L1" | "L2"
    family: str              # "north" | "south"
    x0: np.ndarray           # (x0, 0, z0, 0, vy0, 0), normalized
    period: float
    cj: float
    index: int = 0

    def __post_init__(self):
        x0 = np.asarray(self.x0, float)
        object.__setattr__(self, "x0", x0)
        if not (x0[1] == 0.0 and x0[3] == 0.0 and x0[5] == 0.0):
            raise ValueError("halo initial state must be a perpendicular "
                             "xz-plane crossing (y = vx = vz = 0)")
        if self.family == "north" and x0[2] < 0 or \
           self.family == "south" and x0[2] > 0:
            raise ValueError(f"family {self.family!r} inconsistent with "
                             f"z0 = {x0[2]:.3e}")


@dataclass(frozen=True)
class HaloFamily:
    system: str
    point: str
    family: str
    members: tuple

    def __post_init__(self):
        cjs = [m.cj for m in self.members]
        if any(b < a for a, b in zip(cjs, cjs[1:])):
            raise ValueError("family members must be sorted by C_J")

    @property
    def cj_grid(self) -> np.ndarray:
        return np.array([m.cj for m in self.members])


@dataclass(frozen=True)
class Monodromy:
    matrix: np.ndarray
    lam_u: float | None
    lam_s: float | None
    v_u: np.ndarray | None
    v_s: np.ndarray | None

    @property
    def is_stable(self) -> bool:
        return self.lam_u is None


@dataclass(frozen=True)
class ManifoldSeed:
    orbit: HaloOrbit
    point_index: int         # 0..n-1 along the orbit, uniform in time
    t_along: float           # time from x0 to the departure point
    stability: str           # "stable" | "unstable"
    branch: str              # "inner" | "outer"
    state: np.ndarray        # perturbed 6-state, normalized


# ------------------------------------------------------------ first guess

def _gamma(model: Cr3bpModel, point: str) -> float:
    pts = {p.label: p for p in model.lagrange_points()}
    return abs(pts[point].pos[0] - (model.mu - 1.0))


def _c_coeff(mu, gamma, point, n):
    if point == "L1":
        return (mu + (-1.0) ** n * (1 - mu) * gamma ** (n + 1)
                / (1 - gamma) ** (n + 1)) / gamma**3
    return ((-1.0) ** n * (mu + (1 - mu) * gamma ** (n + 1)
                           / (1 + gamma) ** (n + 1))) / gamma**3


def richardson_seed(model: Cr3bpModel, point: str, family: str,
                    amplitude_z: float):
    """Third-order analytic halo first guess.

    amplitude_z is the out-of-plane amplitude in normalized units.
    Returns (state, period) in the adopted frame (primary at +mu).
    The construction is carried out in the unperturbed problem; pass a
    J2 model and the corrector absorbs the difference.
    """
    if point not in ("L1", "L2"):
        raise ValueError("halo seeds exist for L1 and L2 only")
    if family not in ("north", "south"):
        raise ValueError("family must be 'north' or 'south'")
    mu = model.mu
    # distance moon -> libration point from the unperturbed problem, since
    # the expansion coefficients assume it
    from .cr3bp import classical_model
    gamma = _gamma(classical_model(model.system), point)

    c2 = _c_coeff(mu, gamma, point, 2)
    c3 = _c_coeff(mu, gamma, point, 3)
    c4 = _c_coeff(mu, gamma, point, 4)

    lam = math.sqrt((2 - c2 + math.sqrt(9 * c2**2 - 8 * c2)) / 2)
    k = 2 * lam / (lam**2 + 1 - c2)
    delta = lam**2 - c2

    d1 = 3 * lam**2 / k * (k * (6 * lam**2 - 1) - 2 * lam)
    d2 = 8 * lam**2 / k * (k * (11 * lam**2 - 1) - 2 * lam)

    a21 = 3 * c3 * (k**2 - 2) / (4 * (1 + 2 * c2))
    a22 = 3 * c3 / (4 * (1 + 2 * c2))
    a23 = -3 * c3 * lam / (4 * k * d1) * (3 * k**3 * lam - 6 * k * (k - lam) + 4)
    a24 = -3 * c3 * lam / (4 * k * d1) * (2 + 3 * k * lam)
    b21 = -3 * c3 * lam / (2 * d1) * (3 * k * lam - 4)
    b22 = 3 * c3 * lam / d1
    d21 = -c3 / (2 * lam**2)

    a31 = (-9 * lam / (4 * d2) * (4 * c3 * (k * a23 - b21) + k * c4 * (4 + k**2))
           + (9 * lam**2 + 1 - c2) / (2 * d2)
           * (3 * c3 * (2 * a23 - k * b21) + c4 * (2 + 3 * k**2)))
    a32 = (-1 / d2 * (9 * lam / 4 * (4 * c3 * (k * a24 - b22) + k * c4)
                      + 1.5 * (9 * lam**2 + 1 - c2)
                      * (c3 * (k * b22 + d21 - 2 * a24) - c4)))
    b31 = (3 / (8 * d2)
           * (8 * lam * (3 * c3 * (k * b21 - 2 * a23) - c4 * (2 + 3 * k**2))
              + (9 * lam**2 + 1 + 2 * c2)
              * (4 * c3 * (k * a23 - b21) + k * c4 * (4 + k**2))))
    b32 = (1 / d2 * (9 * lam * (c3 * (k * b22 + d21 - 2 * a24) - c4)
                     + 3 / 8 * (9 * lam**2 + 1 + 2 * c2)
                     * (4 * c3 * (k * a24 - b22) + k * c4)))
    d31 = 3 / (64 * lam**2) * (4 * c3 * a24 + c4)
    d32 = 3 / (64 * lam**2) * (4 * c3 * (a23 - d21) + c4 * (4 + k**2))

    denom = 2 * lam * (lam * (1 + k**2) - 2 * k)
    s1 = (1.5 * c3 * (2 * a21 * (k**2 - 2) - a23 * (k**2 + 2) - 2 * k * b21)
          - 3 / 8 * c4 * (3 * k**4 - 8 * k**2 + 8)) / denom
    s2 = (1.5 * c3 * (2 * a22 * (k**2 - 2) + a24 * (k**2 + 2)
                      + 2 * k * b22 + 5 * d21)
          + 3 / 8 * c4 * (12 - k**2)) / denom
    a1 = -1.5 * c3 * (2 * a21 + a23 + 5 * d21) - 3 / 8 * c4 * (12 - k**2)
    a2 = 1.5 * c3 * (a24 - 2 * a22) + 9 / 8 * c4
    l1 = a1 + 2 * lam**2 * s1
    l2 = a2 + 2 * lam**2 * s2

    az = amplitude_z / gamma
    ax2 = -(delta + l2 * az**2) / l1
    if az > 0.0 and ax2 <= 0.0:
        raise ValueError(
            f"z-amplitude {amplitude_z:.4g} below the halo bifurcation "
            f"threshold for {point} (Ax^2 = {ax2:.3e})")
    ax = math.sqrt(max(ax2, 0.0))
    omega = 1 + s1 * ax**2 + s2 * az**2
    period = 2 * math.pi / (lam * omega)

    dn = 1.0 if family == "north" else -1.0
    # state at phase tau1 = 0: perpendicular xz-crossing
    x_r = (a21 * ax**2 + a22 * az**2 - ax
           + (a23 * ax**2 - a24 * az**2)
           + (a31 * ax**3 - a32 * ax * az**2))
    z_r = dn * (az + d21 * ax * az * (1 - 3)
                + (d32 * az * ax**2 - d31 * az**3))
    vy_r = lam * omega * (k * ax + 2 * (b21 * ax**2 - b22 * az**2)
                          + 3 * (b31 * ax**3 - b32 * ax * az**2))

    # expansion frame: origin at the libration point, lengths in gamma,
    # secondary toward +x; convert, then mirror into the adopted frame
    # (x, y -> -x, -y), which leaves z untouched
    sign = -1.0 if point == "L1" else 1.0
    x_std = (1 - mu) + sign * gamma + gamma * x_r
    state_std = np.array([x_std, 0.0, gamma * z_r, 0.0, gamma * vy_r, 0.0])
    state = state_std * np.array([-1.0, 1.0, 1.0, 1.0, -1.0, 1.0])
    return state, period


# -------------------------------------------------------------- corrector

class _StmField:
    """42-dim augmented field wrapper understood by the propagator."""

    native_kind = "cr3bp_stm"

    def __init__(self, model: Cr3bpModel):
        self.params = model.params
        self.eom = model.eom_stm


def _half_period_crossing(model, state0, t_max):
    """Propagate state+STM to the first y=0 crossing (the half period)."""
    y0 = np.concatenate([state0, np.eye(6).ravel()])
    ev = EventSpec("y_plane", direction=0, count=1, terminal=True)
    yf, t_half, _, _ = propagate_to_event(
        _StmField(model), y0, [ev], _CORR_CFG, t_max=t_max)
    return yf[:6], yf[6:].reshape(6, 6), t_half


def differential_correct(model: Cr3bpModel, seed_state, period_guess,
                         system_label=None, family=None, index=0,
                         tol=1e-11, max_iter=50) -> HaloOrbit:
    """Newton-correct a perpendicular-crossing seed into a periodic halo.

    z0 is held fixed; x0 and vy0 (and implicitly the half period) absorb
    the residual perpendicularity defects at the y=0 crossing.
    """
    state = np.asarray(seed_state, float).copy()
    state[[1, 3, 5]] = 0.0
    t_cap = 3.0 * period_guess
    history = []
    for _ in range(max_iter):
        yf, stm, t_half = _half_period_crossing(model, state, t_cap)
        res = np.array([yf[3], yf[5]])
        history.append(float(np.abs(res).max()))
        if history[-1] <= tol:
            point = "L1" if state[0] > model.mu - 1.0 else "L2"
            fam = family or ("north" if state[2] > 0 else "south")
            return HaloOrbit(
                system=system_label or model.system.label,
                point=point, family=fam, x0=state,
                period=2.0 * t_half,
                cj=model.jacobi_constant(state), index=index)
        acc = model.eom(0.0, yf)
        # eliminate the time variation through the crossing condition dy=0
        m = (np.array([[stm[3, 0], stm[3, 4]], [stm[5, 0], stm[5, 4]]])
             - np.outer([acc[3], acc[5]],
                        [stm[1, 0], stm[1, 4]]) / yf[4])
        try:
            dx0, dvy0 = np.linalg.solve(m, -res)
        except np.linalg.LinAlgError as exc:
            raise CorrectionError(f"singular correction matrix: {exc}")
        state[0] += dx0
        state[4] += dvy0
    raise CorrectionError(
        f"no convergence in {max_iter} iterations; residuals {history[-4:]}")


# ------------------------------------------------------------ continuation

def _member_at_amplitude(model, point, family, az, warm=None):
    if warm is None:
        seed, period = richardson_seed(model, point, family, az)
    else:
        seed = warm.x0.copy()
        seed[2] = math.copysign(az, 1.0 if family == "north" else -1.0)
        period = warm.period
    return differential_correct(model, seed, period, family=family)


def _u_state(u):
    return np.array([u[0], 0.0, u[1], 0.0, u[2], 0.0])


def _section_residuals(model, yf, stm):
    """Periodicity defects at y=0 and their (x0, z0, vy0) sensitivities."""
    acc = model.eom(0.0, yf)
    if abs(yf[4]) < 1e-10:
        raise CorrectionError("near-tangential section crossing (vy ~ 0)")
    rows = np.empty((2, 3))
    for k, c in enumerate((0, 2, 4)):
        # eliminate the crossing-time variation through dy = 0
        rows[0, k] = stm[3, c] - acc[3] * stm[1, c] / yf[4]
        rows[1, k] = stm[5, c] - acc[5] * stm[1, c] / yf[4]
    return np.array([yf[3], yf[5]]), rows


def _palc_member(model, u_pred, tangent, t_cap, tol=1e-11, max_iter=20):
    """One pseudo-arclength step: periodicity plus a tangency constraint."""
    u = u_pred.copy()
    for _ in range(max_iter):
        yf, stm, t_half = _half_period_crossing(model, _u_state(u), t_cap)
        res, rows = _section_residuals(model, yf, stm)
        if np.abs(res).max() <= tol:
            return u, t_half
        jac = np.vstack([rows, tangent])
        rhs = -np.array([res[0], res[1], (u - u_pred) @ tangent])
        try:
            u = u + np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError as exc:
            raise CorrectionError(f"singular continuation system: {exc}")
    raise CorrectionError("pseudo-arclength step did not converge")


def _member_at_cj(model, u_guess, cj_target, t_cap, tol=1e-11, cj_tol=1e-10,
                  max_iter=30):
    """Newton on (x0, z0, vy0): periodicity plus an exact C_J constraint."""
    u = u_guess.copy()
    for _ in range(max_iter):
        state = _u_state(u)
        yf, stm, t_half = _half_period_crossing(model, state, t_cap)
        res, rows = _section_residuals(model, yf, stm)
        cj_res = model.jacobi_constant(state) - cj_target
        if np.abs(res).max() <= tol and abs(cj_res) <= cj_tol:
            return u, t_half
        grad = 2.0 * model.omega_gradient(state[:3])
        jac = np.vstack([rows, [grad[0], grad[2], -2.0 * u[2]]])
        try:
            u = u + np.linalg.solve(jac, -np.array([res[0], res[1], cj_res]))
        except np.linalg.LinAlgError as exc:
            raise CorrectionError(f"singular energy-targeting system: {exc}")
    raise CorrectionError(f"C_J target {cj_target:.9f} not reached")


def continue_family(model: Cr3bpModel, point: str, family: str,
                    cj_range=None, count: int = 25) -> HaloFamily:
    """Family of `count` members on a uniform C_J grid.

    cj_range defaults to the per-system window of CJ_WINDOWS.  Members are
    indexed 1..count from the high-C_J end (small orbits first).  The
    family is first traced with pseudo-arclength steps (C_J is not a valid
    continuation parameter near its fold, nor is the z-amplitude), then
    each grid value is met exactly by an energy-constrained corrector
    seeded from the nearest traced point.
    """
    label = model.system.label
    if cj_range is None:
        try:
            cj_range = CJ_WINDOWS[label]
        except KeyError:
            raise ValueError(f"no default C_J window for system {label!r}")
    cj_lo, cj_hi = sorted(cj_range)
    targets = np.linspace(cj_hi, cj_lo, count)   # index 1 = highest C_J
    span = cj_hi - cj_lo

    gamma = _gamma(model, point)
    o0 = _member_at_amplitude(model, point, family, 0.04 * gamma)
    o1 = _member_at_amplitude(model, point, family, 0.05 * gamma)
    u_prev = np.array([o0.x0[0], o0.x0[2], o0.x0[4]])
    u_cur = np.array([o1.x0[0], o1.x0[2], o1.x0[4]])
    knots = [(o0.cj, u_prev, o0.period), (o1.cj, u_cur, o1.period)]
    cj_cur = o1.cj
    t_half = o1.period / 2.0
    ds = float(np.linalg.norm(u_cur - u_prev))
    moon = np.array([model.mu - 1.0, 0.0, 0.0])
    r_floor = ((model.system.secondary.radius_eq + 20.0)
               / model.system.length_unit)

    def _partial(msg):
        # solve whatever grid values the traced stretch already covers
        reachable = [t for t in targets
                     if min(k[0] for k in knots) <= t <= max(k[0] for k in knots)]
        return ContinuationError(msg, members=_solve_grid(reachable))

    def _solve_grid(cj_values):
        members = []
        knot_cjs = np.array([k[0] for k in knots])
        for idx, cj_t in enumerate(cj_values, start=1):
            j = int(np.argmin(np.abs(knot_cjs - cj_t)))
            _, u_seed, period_seed = knots[j]
            u_sol, th = _member_at_cj(model, u_seed, cj_t, 3.0 * period_seed)
            state = _u_state(u_sol)
            members.append(HaloOrbit(
                system=label, point=point, family=family, x0=state,
                period=2.0 * th, cj=model.jacobi_constant(state), index=idx))
        return members

    for _ in range(20000):
        if cj_cur < cj_lo - 1e-8:
            break
        tangent = (u_cur - u_prev) / np.linalg.norm(u_cur - u_prev)
        try:
            u_new, th_new = _palc_member(model, u_cur + ds * tangent, tangent,
                                         6.0 * t_half)
        except (CorrectionError, EventNotFoundError):
            ds *= 0.5
            if ds < 1e-13:
                raise _partial(
                    f"family boundary: continuation stalled at "
                    f"C_J = {cj_cur:.9f}, short of {cj_lo:.9f}")
            continue
        cj_new = model.jacobi_constant(_u_state(u_new))
        # keep the energy sampling fine enough for good grid-solve seeds
        if abs(cj_new - cj_cur) > 0.25 * span and ds > 1e-10:
            ds *= 0.5
            continue
        if np.linalg.norm(_u_state(u_new)[:3] - moon) < r_floor:
            raise _partial(
                f"family boundary: 20 km altitude floor at C_J = {cj_new:.9f}")
        if cj_new > cj_cur + 1e-12 and cj_cur > cj_lo:
            raise _partial(
                f"family boundary: C_J folds upward at {cj_cur:.9f}, above "
                f"the requested {cj_lo:.9f}")
        u_prev, u_cur, t_half, cj_cur = u_cur, u_new, th_new, cj_new
        knots.append((cj_cur, u_cur, 2.0 * th_new))
        ds = min(ds * 1.3, 2e-4)
    else:
        raise _partial("continuation step budget exhausted")

    try:
        members = _solve_grid(targets)
    except (CorrectionError, EventNotFoundError) as exc:
        raise ContinuationError(f"grid solve failed: {exc}")
    for m, cj_t in zip(members, targets):
        if abs(m.cj - cj_t) > 1e-9:
            raise ContinuationError(
                f"C_J target {cj_t:.9f} not met (got {m.cj:.9f})",
                members=members)

    members.sort(key=lambda m: m.cj)
    return HaloFamily(label, point, family, tuple(members))


# ------------------------------------------------------- monodromy, seeds

def monodromy(model: Cr3bpModel, halo: HaloOrbit) -> Monodromy:
    """STM over one period with its hyperbolic eigen-structure."""
    from .propagator import propagate_with_stm
    _, stm, _ = propagate_with_stm(model, halo.x0, (0.0, halo.period),
                                   _CORR_CFG)
    vals, vecs = np.linalg.eig(stm)
    best = None
    for i, v in enumerate(vals):
        if abs(v.imag) < 1e-6 * max(1.0, abs(v.real)) and v.real > 1.0 + 1e-6:
            if best is None or v.real > vals[best].real:
                best = i
    if best is None:
        return Monodromy(stm, None, None, None, None)
    lam_u = float(vals[best].real)
    v_u = np.real(vecs[:, best])
    v_u /= np.linalg.norm(v_u)
    # stable partner: eigenvalue nearest 1/lam_u
    j = int(np.argmin(np.abs(vals - 1.0 / lam_u)))
    v_s = np.real(vecs[:, j])
    v_s /= np.linalg.norm(v_s)
    return Monodromy(stm, lam_u, float(vals[j].real), v_u, v_s)


def seed_manifolds(model: Cr3bpModel, halo: HaloOrbit, n_points: int = 100,
                   stability: str = "unstable", branch: str = "inner",
                   eps: float = 1e-6, times=None) -> list:
    """Manifold seed states at n_points uniform-in-time orbit points.

    The monodromy eigenvector is transported to each point with the STM
    and applied as a 6-D displacement of norm eps; the branch is selected
    by the sign of the position displacement along x relative to the moon.
    An explicit array of departure times (taken modulo the period and
    sorted) overrides the uniform spacing.
    """
    if stability not in ("stable", "unstable"):
        raise ValueError("stability must be 'stable' or 'unstable'")
    if branch not in ("inner", "outer"):
        raise ValueError("branch must be 'inner' or 'outer'")
    mono = monodromy(model, halo)
    if mono.is_stable:
        raise ValueError("orbit is linearly stable: no hyperbolic manifolds")
    v0 = mono.v_u if stability == "unstable" else mono.v_s

    from .propagator import propagate_with_stm
    x_moon = model.mu - 1.0
    if times is None:
        times = halo.period * np.arange(n_points) / n_points
    else:
        times = np.sort(np.asarray(times, float) % halo.period)
    seeds = []
    state = halo.x0.copy()
    phi = np.eye(6)
    t_prev = 0.0
    for j, t_j in enumerate(times):
        if t_j > t_prev:
            state, dphi, _ = propagate_with_stm(model, state,
                                                (t_prev, t_j), _CORR_CFG)
            phi = dphi @ phi
            t_prev = t_j
        v = phi @ v0
        v = v / np.linalg.norm(v)
        # inner branch: position displacement points toward the moon
        toward = math.copysign(1.0, x_moon - state[0])
        if v[0] * toward < 0.0:
            v = -v
        if branch == "outer":
            v = -v
        seeds.append(ManifoldSeed(
            orbit=halo, point_index=j, t_along=float(t_j),
            stability=stability, branch=branch,
            state=state + eps * v))
    return seeds


# ------------------------------------------------------------------- JSON

def family_to_json(family: HaloFamily) -> str:
    return json.dumps({
        "system": family.system,
        "point": family.point,
        "family": family.family,
        "members": [
            {"index": m.index, "x0": list(map(float, m.x0)),
             "period": m.period, "cj": m.cj}
            for m in family.members
        ],
    }, indent=2)


def family_from_json(text: str) -> HaloFamily:
    d = json.loads(text)
    members = tuple(
        HaloOrbit(d["system"], d["point"], d["family"],
                  np.array(m["x0"]), m["period"], m["cj"], m["index"])
        for m in d["members"])
    return HaloFamily(d["system"], d["point"], d["family"], members)
