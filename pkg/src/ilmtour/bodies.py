"""Physical catalog of the Saturnian system and normalized system parameters.

The built-in catalog stores the masses, radii, mean orbital radii, periods,
orbit elements and J2 coefficients of Saturn and its major moons.  A
Saturn-moon pair is turned into the normalized parameter set of the oblate
circular restricted three-body problem by :func:`make_system`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import G

__all__ = [
    "BodyParams",
    "SystemParams",
    "PropulsionParams",
    "CatalogError",
    "load_catalog",
    "get_body",
    "make_system",
    "system_for",
    "soi_radius",
    "MOON_KEYS",
    "SYSTEM_LABELS",
]

MOON_KEYS = ("Mimas", "Enceladus", "Tethys", "Dione", "Rhea")

# Short labels used by the CLI and the tables: SMi, SEn, ...
SYSTEM_LABELS = {
    "SMi": "Mimas",
    "SEn": "Enceladus",
    "STe": "Tethys",
    "SDi": "Dione",
    "SRh": "Rhea",
}

MOON_ABBREV = {
    "Mi": "Mimas",
    "En": "Enceladus",
    "Te": "Tethys",
    "Di": "Dione",
    "Rh": "Rhea",
    "Ti": "Titan",
}


class CatalogError(ValueError):
    """Raised for malformed catalog files or inconsistent body data."""


@dataclass(frozen=True)
class BodyParams:
    """Physical constants of one body.

    gm is the primary observable; mass is derived from it (or vice versa)
    with the fixed G of :mod:`ilmtour.constants`.  ``orbit_radius_d`` is the
    mean Saturn-centered orbital radius in km and is absent (None) for
    Saturn itself.
    """

    name: str
    gm: float                      # [km^3/s^2]
    mass: float                    # [kg]
    radius_eq: float               # [km]
    j2: float
    orbit_radius_d: float | None = None   # [km]
    period: float | None = None           # [day]
    ecc: float = 0.0
    incl: float = 0.0                     # [deg]

    def __post_init__(self):
        if self.gm <= 0:
            raise CatalogError(f"{self.name}: gm must be positive, got {self.gm}")
        if self.radius_eq <= 0:
            raise CatalogError(f"{self.name}: radius must be positive")
        if self.j2 < 0:
            raise CatalogError(f"{self.name}: J2 must be non-negative")
        if not 0.0 <= self.ecc < 1.0:
            raise CatalogError(f"{self.name}: eccentricity out of [0, 1)")


@dataclass(frozen=True)
class SystemParams:
    """Normalized parameters of one Saturn-moon pair.

    mu_ratio is m2/(m1+m2); a1/a2 are the dimensionless oblateness
    parameters J2_i (R_i/d)^2, and n_norm the normalized mean motion
    sqrt(1 + 1.5 (a1 + a2)).  length_unit/time_unit convert normalized
    coordinates to km and s.
    """

    primary: BodyParams
    secondary: BodyParams
    mu_ratio: float
    a1: float
    a2: float
    n_norm: float
    length_unit: float    # [km]
    time_unit: float      # [s]

    @property
    def velocity_unit(self) -> float:
        return self.length_unit / self.time_unit

    @property
    def gm_total(self) -> float:
        return self.primary.gm + self.secondary.gm

    @property
    def label(self) -> str:
        for lab, moon in SYSTEM_LABELS.items():
            if moon == self.secondary.name:
                return lab
        return f"S{self.secondary.name[:2]}"


@dataclass(frozen=True)
class PropulsionParams:
    """Thruster performance assumptions."""

    t_max: float = 36e-3     # [N]
    isp: float = 1600.0      # [s]
    p_in: float = 640.0      # [W]
    g0: float = 9.81         # [m/s^2]

    def __post_init__(self):
        if self.t_max <= 0 or self.isp <= 0:
            raise ValueError("thrust and specific impulse must be positive")

    @property
    def mdot(self) -> float:
        """Propellant mass flow at full thrust [kg/s]."""
        return self.t_max / (self.g0 * self.isp)

    @property
    def ve(self) -> float:
        """Effective exhaust velocity [m/s]."""
        return self.g0 * self.isp


def _body(name, mass_1e20_kg, radius_km, j2, d_1e3_km=None, period_day=None,
          ecc=0.0, incl_deg=0.0):
    mass = mass_1e20_kg * 1e20
    return BodyParams(
        name=name,
        gm=G * mass,
        mass=mass,
        radius_eq=radius_km,
        j2=j2,
        orbit_radius_d=None if d_1e3_km is None else d_1e3_km * 1e3,
        period=period_day,
        ecc=ecc,
        incl=incl_deg,
    )


def _default_catalog() -> dict[str, BodyParams]:
    return {
        b.name: b
        for b in (
            _body("Saturn", 568.32e4, 60268.0, 1.6291e-2),
            _body("Mimas", 0.3799, 207.4, 3.1089e-2, 185.52, 0.9424, 0.0202, 1.53),
            _body("Enceladus", 1.0805, 256.6, 5.4352e-3, 238.02, 1.3702, 0.0045, 0.01),
            _body("Tethys", 6.1742, 540.4, 9.4345e-3, 294.66, 1.8878, 0.0000, 1.86),
            _body("Dione", 10.954, 563.8, 1.4368e-3, 377.40, 2.7369, 0.0022, 0.02),
            _body("Rhea", 23.066, 767.2, 9.4961e-4, 527.04, 4.5175, 0.0010, 0.35),
            _body("Titan", 1345.5, 2575.0, 3.3414e-5, 1221.9, 15.945, 0.0292, 0.33),
        )
    }


_CATALOG_KEYS = {
    "gm_km3_s2": "gm",
    "mass_kg": "mass",
    "radius_km": "radius_eq",
    "j2": "j2",
    "d_km": "orbit_radius_d",
    "period_day": "period",
    "ecc": "ecc",
    "incl_deg": "incl",
}


def _parse_catalog_file(path) -> dict[str, BodyParams]:
    """Parse the plain-text catalog format.

    Sections are headed ``[body <name>]`` and contain ``key = value`` lines
    with the keys of ``_CATALOG_KEYS``.  Either gm or mass may be given;
    the other is derived with the fixed G.
    """
    sections: dict[str, dict[str, float]] = {}
    current: dict[str, float] | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not (line.endswith("]") and line[1:-1].split()[0] == "body"):
                    raise CatalogError(f"{path}:{lineno}: malformed section header {line!r}")
                parts = line[1:-1].split()
                if len(parts) != 2:
                    raise CatalogError(f"{path}:{lineno}: section header needs a body name")
                current = sections.setdefault(parts[1], {})
                continue
            if current is None:
                raise CatalogError(f"{path}:{lineno}: key/value pair outside a [body] section")
            if "=" not in line:
                raise CatalogError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, val = (t.strip() for t in line.partition("="))
            if key not in _CATALOG_KEYS:
                raise CatalogError(f"{path}:{lineno}: unknown field {key!r}")
            try:
                current[key] = float(val)
            except ValueError as exc:
                raise CatalogError(f"{path}:{lineno}: field {key!r}: bad number {val!r}") from exc

    bodies = {}
    for name, fields in sections.items():
        kwargs = {_CATALOG_KEYS[k]: v for k, v in fields.items()}
        gm = kwargs.get("gm")
        mass = kwargs.get("mass")
        if gm is None and mass is None:
            raise CatalogError(f"{path}: body {name}: needs gm_km3_s2 or mass_kg")
        if gm is None:
            kwargs["gm"] = G * mass
        if mass is None:
            kwargs["mass"] = gm / G
        try:
            bodies[name] = BodyParams(name=name, **kwargs)
        except TypeError as exc:
            raise CatalogError(f"{path}: body {name}: missing required fields") from exc
    return bodies


def load_catalog(source=None) -> list[BodyParams]:
    """Return the body catalog, from a file if given, else built-in values."""
    if source is None:
        cat = _default_catalog()
    else:
        cat = _parse_catalog_file(source)
    return list(cat.values())


def get_body(name: str, catalog=None) -> BodyParams:
    """Look up a body by full name or two-letter abbreviation."""
    name = MOON_ABBREV.get(name, SYSTEM_LABELS.get(name, name))
    for b in catalog or load_catalog():
        if b.name == name:
            return b
    raise CatalogError(f"body {name!r} not in catalog")


def make_system(primary: BodyParams, secondary: BodyParams) -> SystemParams:
    """Build the normalized Saturn-moon system parameters.

    The oblateness parameters are the dimensionless A_i = J2_i (R_i/d)^2,
    which make the normalized mean motion n^2 = 1 + 1.5 (A1 + A2)
    dimensionally consistent.
    """
    d = secondary.orbit_radius_d
    if d is None:
        raise CatalogError(f"{secondary.name}: secondary needs an orbit radius")
    mu = secondary.mass / (primary.mass + secondary.mass)
    a1 = primary.j2 * (primary.radius_eq / d) ** 2
    a2 = secondary.j2 * (secondary.radius_eq / d) ** 2
    n_norm = math.sqrt(1.0 + 1.5 * (a1 + a2))
    time_unit = math.sqrt(d**3 / (primary.gm + secondary.gm))
    return SystemParams(
        primary=primary,
        secondary=secondary,
        mu_ratio=mu,
        a1=a1,
        a2=a2,
        n_norm=n_norm,
        length_unit=d,
        time_unit=time_unit,
    )


def system_for(label: str, catalog=None) -> SystemParams:
    """Build a SystemParams from a label like 'SEn' or a moon name."""
    moon = SYSTEM_LABELS.get(label, MOON_ABBREV.get(label, label))
    cat = catalog or load_catalog()
    return make_system(get_body("Saturn", cat), get_body(moon, cat))


def soi_radius(system: SystemParams, f: float = 4.5) -> float:
    """Scaled Laplace sphere-of-influence radius f d (m2/m1)^(2/5) in km."""
    if f <= 0:
        raise ValueError("scale factor must be positive")
    m_ratio = system.secondary.mass / system.primary.mass
    return f * system.length_unit * m_ratio ** 0.4
