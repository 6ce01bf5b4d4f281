"""Saturn-centered inertial states of perturbing bodies.

Two provider backends behind one contract: analytic Keplerian propagation
from catalog elements, and cubic interpolation of tabulated state files
(for users who export higher-fidelity ephemerides externally).  The Sun
is placed opposite Saturn's heliocentric Keplerian position; Jupiter is
held fixed at the minimum Saturn-Jupiter distance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import CubicSpline

from . import constants
from .bodies import load_catalog
from .frames import InertialState, OrbitalElements, kep_to_cart

__all__ = [
    "EphemerisError", "KeplerianEphemeris", "TabulatedEphemeris",
    "kepler_solve", "jupiter_fixed_state", "sun_state",
    "ingest_table", "export_table", "BODY_IDS",
]

# bodies a provider is expected to serve (five ILMs + Titan); the Sun and
# Jupiter have dedicated analytic states below
BODY_IDS = ("Mi", "En", "Te", "Di", "Rh", "Ti")

_FULL = {"Mi": "Mimas", "En": "Enceladus", "Te": "Tethys",
         "Di": "Dione", "Rh": "Rhea", "Ti": "Titan"}


class EphemerisError(ValueError):
    pass


def kepler_solve(mean_anom: float, e: float, tol: float = 1e-12) -> float:
    """Eccentric anomaly from mean anomaly, Newton iteration to tol [rad]."""
    m = math.remainder(mean_anom, 2.0 * math.pi)
    ea = m if e < 0.8 else math.copysign(math.pi, m)
    for _ in range(50):
        f = ea - e * math.sin(ea) - m
        ea -= f / (1.0 - e * math.cos(ea))
        if abs(f) < tol:
            return ea
    raise EphemerisError(f"Kepler iteration stalled at e={e}, M={mean_anom}")


def _true_anomaly(ea: float, e: float) -> float:
    return 2.0 * math.atan2(math.sqrt(1.0 + e) * math.sin(ea / 2.0),
                            math.sqrt(1.0 - e) * math.cos(ea / 2.0))


@dataclass(frozen=True)
class KeplerianEphemeris:
    """Two-body propagation of catalog elements around Saturn.

    Per-body phase angles [deg] set the mean anomaly at the reference
    epoch (default zero: all bodies start at periapsis, which is all the
    public catalog supports; real phases require external ephemerides).
    """

    gm: float
    elements: dict
    phases: dict = dc_field(default_factory=dict)
    ref_epoch: float = 0.0

    @classmethod
    def from_catalog(cls, catalog=None, phases=None, ref_epoch=0.0):
        cat = {b.name: b for b in load_catalog()} if catalog is None else \
            {b.name: b for b in catalog}
        gm = cat["Saturn"].gm
        els = {}
        for bid, name in _FULL.items():
            b = cat[name]
            els[bid] = OrbitalElements(
                a=b.orbit_radius_d, e=b.ecc, i=math.radians(b.incl),
                raan=0.0, argp=0.0, ta=0.0)
        return cls(gm=gm, elements=els, phases=dict(phases or {}),
                   ref_epoch=ref_epoch)

    def state_of(self, body: str, epoch: float) -> InertialState:
        if body not in self.elements:
            raise EphemerisError(f"unknown body {body!r}")
        el = self.elements[body]
        n = math.sqrt(self.gm / el.a**3)
        m0 = math.radians(self.phases.get(body, 0.0))
        ea = kepler_solve(m0 + n * (epoch - self.ref_epoch), el.e)
        el_t = OrbitalElements(el.a, el.e, el.i, el.raan, el.argp,
                               _true_anomaly(ea, el.e))
        return kep_to_cart(el_t, self.gm, epoch=epoch, frame="SCI")


@dataclass(frozen=True)
class TabulatedEphemeris:
    """Cubic interpolation over per-body SCI state time series."""

    splines: dict                # body -> CubicSpline over (n, 6) states
    spans: dict                  # body -> (t_min, t_max)

    def state_of(self, body: str, epoch: float) -> InertialState:
        if body not in self.splines:
            raise EphemerisError(f"unknown body {body!r}")
        lo, hi = self.spans[body]
        if not (lo <= epoch <= hi):
            raise EphemerisError(
                f"epoch {epoch} outside tabulated span [{lo}, {hi}]")
        y = self.splines[body](epoch)
        return InertialState(y[:3], y[3:], epoch=epoch, frame="SCI")


def ingest_table(path) -> TabulatedEphemeris:
    """Build a provider from the CSV schema body,t_s,x..vz."""
    series: dict = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        want = ["body", "t_s", "x_km", "y_km", "z_km",
                "vx_kms", "vy_kms", "vz_kms"]
        if header != want:
            raise EphemerisError(f"bad header {header}, want {want}")
        for row in reader:
            series.setdefault(row[0], []).append([float(v)
                                                  for v in row[1:]])
    if not series:
        raise EphemerisError("empty ephemeris table")
    splines, spans = {}, {}
    for body, rows in series.items():
        arr = np.array(rows)
        t = arr[:, 0]
        if np.any(np.diff(t) <= 0):
            raise EphemerisError(f"{body}: non-monotone time grid")
        splines[body] = CubicSpline(t, arr[:, 1:], axis=0)
        spans[body] = (float(t[0]), float(t[-1]))
    return TabulatedEphemeris(splines=splines, spans=spans)


def export_table(path, provider, bodies, epochs):
    """Sample a provider onto the tabulated CSV schema."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["body", "t_s", "x_km", "y_km", "z_km",
                    "vx_kms", "vy_kms", "vz_kms"])
        for body in bodies:
            for t in epochs:
                s = provider.state_of(body, float(t))
                w.writerow([body, repr(float(t))]
                           + [repr(float(v)) for v in s.vector])


def jupiter_fixed_state(distance_au: float | None = None) -> InertialState:
    """Jupiter pinned at its minimum distance from Saturn, zero velocity."""
    d = (distance_au if distance_au is not None
         else constants.JUPITER_MIN_DISTANCE_AU) * constants.AU_KM
    return InertialState([d, 0.0, 0.0], [0.0, 0.0, 0.0], frame="SCI")


def sun_state(epoch: float) -> InertialState:
    """Sun in SCI: minus Saturn's heliocentric Keplerian state."""
    a = constants.SATURN_HELIO_A_AU * constants.AU_KM
    e = constants.SATURN_HELIO_E
    n = math.sqrt(constants.GM_SUN / a**3)
    ea = kepler_solve(n * epoch, e)
    el = OrbitalElements(a, e, 0.0, 0.0, 0.0, _true_anomaly(ea, e))
    s = kep_to_cart(el, constants.GM_SUN, epoch=epoch)
    return InertialState(-s.pos, -s.vel, epoch=epoch, frame="SCI")
