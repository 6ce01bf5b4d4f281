"""Oblate (J2-perturbed) circular restricted three-body problem.

Rotating barycentric frame, normalized units, with the larger primary at
(+mu, 0, 0) and the moon at (mu-1, 0, 0).  The oblateness of each primary
enters through the dimensionless parameters A1, A2 and the modified mean
motion n^2 = 1 + 1.5 (A1 + A2).  Setting both A's to zero recovers the
classical problem exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bodies import SystemParams, make_system

__all__ = ["Cr3bpModel", "LagrangePoint", "SingularityError", "classical_model"]


class SingularityError(ValueError):
    """Position coincides with one of the primaries."""


@dataclass(frozen=True)
class LagrangePoint:
    label: str
    pos: np.ndarray
    cj: float


def _body_terms(gm, a_obl, dx, y, z):
    """Per-body potential, gradient and C coefficients.

    Returns (u, gx, gy, gz) for the normalized oblate point-mass potential
    gm [1/r + A/(2 r^3) - 3 A z^2/(2 r^5)] evaluated at offset (dx, y, z)
    from the body.
    """
    r2 = dx * dx + y * y + z * z
    if r2 < 1e-24:
        raise SingularityError("state coincides with a primary")
    r = math.sqrt(r2)
    r3 = r2 * r
    c = 1.0 - 1.5 * a_obl / r2 * (5.0 * z * z / r2 - 1.0)
    ct = c + 3.0 * a_obl / r2
    u = gm / r * (1.0 - 0.5 * a_obl / r2 * (3.0 * z * z / r2 - 1.0))
    gx = -gm * dx * c / r3
    gy = -gm * y * c / r3
    gz = -gm * z * ct / r3
    return u, gx, gy, gz


def _body_hessian(gm, a_obl, dx, y, z):
    """Hessian of the per-body potential term at offset (dx, y, z)."""
    r2 = dx * dx + y * y + z * z
    if r2 < 1e-24:
        raise SingularityError("state coincides with a primary")
    r = math.sqrt(r2)
    r3, r5 = r2 * r, r2 * r2 * r
    r7, r9 = r5 * r2, r5 * r2 * r2
    z2 = z * z
    # u = gm [f0(r) + z^2 f1(r)], see module tests for the FD check
    p = -1.0 / r3 - 1.5 * a_obl / r5 + 7.5 * a_obl * z2 / r7
    dp_over_r = 3.0 / r5 + 7.5 * a_obl / r7 - 52.5 * a_obl * z2 / r9
    f1 = -1.5 * a_obl / r5
    cross = 15.0 * a_obl * z / r7
    v = np.array([dx, y, z])
    h = dp_over_r * np.outer(v, v)
    h[0, 0] += p
    h[1, 1] += p
    h[2, 2] += p + 2.0 * f1
    h[0, 2] += cross * dx
    h[2, 0] += cross * dx
    h[1, 2] += cross * y
    h[2, 1] += cross * y
    h[2, 2] += 2.0 * cross * z
    return gm * h


@dataclass(frozen=True)
class Cr3bpModel:
    """Vector field and integrals of one Saturn-moon oblate CR3BP."""

    system: SystemParams
    include_j2_primary: bool = True
    include_j2_secondary: bool = True

    @property
    def mu(self) -> float:
        return self.system.mu_ratio

    @property
    def a1(self) -> float:
        return self.system.a1 if self.include_j2_primary else 0.0

    @property
    def a2(self) -> float:
        return self.system.a2 if self.include_j2_secondary else 0.0

    @property
    def n(self) -> float:
        return math.sqrt(1.0 + 1.5 * (self.a1 + self.a2))

    @property
    def params(self) -> np.ndarray:
        """Parameter vector (mu, a1, a2, n) consumed by the integrator core."""
        return np.array([self.mu, self.a1, self.a2, self.n])

    # positions of the primaries on the x-axis
    @property
    def primary_pos(self) -> np.ndarray:
        return np.array([self.mu, 0.0, 0.0])

    @property
    def secondary_pos(self) -> np.ndarray:
        return np.array([self.mu - 1.0, 0.0, 0.0])

    def effective_potential(self, pos) -> float:
        x, y, z = (float(v) for v in pos)
        mu, n = self.mu, self.n
        u1 = _body_terms(1.0 - mu, self.a1, x - mu, y, z)[0]
        u2 = _body_terms(mu, self.a2, x + 1.0 - mu, y, z)[0]
        r1sq = (x - mu) ** 2 + y * y + z * z
        r2sq = (x + 1.0 - mu) ** 2 + y * y + z * z
        return (u1 + u2
                + 0.5 * n * n * ((1.0 - mu) * r1sq + mu * r2sq - z * z)
                + 0.5 * mu * (1.0 - mu))

    def omega_gradient(self, pos) -> np.ndarray:
        x, y, z = (float(v) for v in pos)
        mu, n = self.mu, self.n
        _, g1x, g1y, g1z = _body_terms(1.0 - mu, self.a1, x - mu, y, z)
        _, g2x, g2y, g2z = _body_terms(mu, self.a2, x + 1.0 - mu, y, z)
        return np.array([g1x + g2x + n * n * x,
                         g1y + g2y + n * n * y,
                         g1z + g2z])

    def omega_hessian(self, pos) -> np.ndarray:
        x, y, z = (float(v) for v in pos)
        mu, n = self.mu, self.n
        h = (_body_hessian(1.0 - mu, self.a1, x - mu, y, z)
             + _body_hessian(mu, self.a2, x + 1.0 - mu, y, z))
        h[0, 0] += n * n
        h[1, 1] += n * n
        return h

    def eom(self, t, state) -> np.ndarray:
        """Synodic-frame equations of motion (6-vector derivative)."""
        x, y, z, vx, vy, vz = (float(v) for v in state[:6])
        gx, gy, gz = self.omega_gradient((x, y, z))
        n = self.n
        return np.array([vx, vy, vz,
                         gx + 2.0 * n * vy,
                         gy - 2.0 * n * vx,
                         gz])

    def jacobi_constant(self, state) -> float:
        """C_J = 2 Omega - v^2, conserved along the flow."""
        state = np.asarray(state, float)
        v2 = float(state[3:6] @ state[3:6])
        return 2.0 * self.effective_potential(state[:3]) - v2

    def jacobian(self, t, state) -> np.ndarray:
        """d(state derivative)/d(state), for variational propagation."""
        n = self.n
        j = np.zeros((6, 6))
        j[0:3, 3:6] = np.eye(3)
        j[3:6, 0:3] = self.omega_hessian(np.asarray(state[:3], float))
        j[3, 4] = 2.0 * n
        j[4, 3] = -2.0 * n
        return j

    def eom_stm(self, t, state42) -> np.ndarray:
        """Augmented 42-dim field: state plus 6x6 state transition matrix."""
        out = np.empty(42)
        out[:6] = self.eom(t, state42[:6])
        j = self.jacobian(t, state42[:6])
        phi = np.asarray(state42[6:]).reshape(6, 6)
        out[6:] = (j @ phi).ravel()
        return out

    # -- equilibria ------------------------------------------------------

    def _omega_x_on_axis(self, x):
        return float(self.omega_gradient((x, 0.0, 0.0))[0])

    def lagrange_points(self) -> list[LagrangePoint]:
        """All five equilibria; collinear by bracketed 1-D root solve."""
        mu = self.mu
        hill = (mu / 3.0) ** (1.0 / 3.0)
        xm = mu - 1.0
        brackets = {
            "L1": (xm + 0.2 * hill, xm + 3.0 * hill),
            "L2": (xm - 3.0 * hill, xm - 0.2 * hill),
            "L3": (mu + 0.5, mu + 1.5),
        }
        pts = []
        for label, (lo, hi) in brackets.items():
            flo, fhi = self._omega_x_on_axis(lo), self._omega_x_on_axis(hi)
            if flo * fhi > 0:
                raise RuntimeError(
                    f"{label}: root not bracketed in [{lo}, {hi}] "
                    f"(f = {flo:.3e}, {fhi:.3e})")
            x = brentq(self._omega_x_on_axis, lo, hi, xtol=1e-15, rtol=8.9e-16)
            pos = np.array([x, 0.0, 0.0])
            pts.append(LagrangePoint(label, pos, self.jacobi_constant(
                np.concatenate([pos, np.zeros(3)]))))
        # triangular points: planar Newton from the classical guesses
        # (the oblateness shifts them by O(A1), a few 1e-4)
        for label, ysign in (("L4", 1.0), ("L5", -1.0)):
            p = np.array([mu - 0.5, ysign * math.sqrt(3.0) / 2.0])
            for _ in range(12):
                f2 = self.omega_gradient((p[0], p[1], 0.0))[:2]
                if np.abs(f2).max() <= 1e-13:
                    break
                h2 = self.omega_hessian((p[0], p[1], 0.0))[:2, :2]
                p = p - np.linalg.solve(h2, f2)
            else:
                raise RuntimeError(
                    f"{label}: Newton stalled, residual {np.abs(f2).max():.3e}")
            pos = np.array([p[0], p[1], 0.0])
            pts.append(LagrangePoint(label, pos, self.jacobi_constant(
                np.concatenate([pos, np.zeros(3)]))))
        return pts


def classical_model(system: SystemParams) -> Cr3bpModel:
    """Same system with both oblateness terms switched off."""
    return Cr3bpModel(system, include_j2_primary=False, include_j2_secondary=False)
