"""Physical constants and shared unit conventions.

All epochs are uniform seconds past J2000 (2000-01-01 12:00), with no leap
second handling.  Lengths are km, velocities km/s unless a function says
otherwise.
"""

# Universal gravitational constant [km^3 / (kg s^2)]
G = 6.67430e-20

# Standard gravity [m/s^2], used in the rocket equation and mass-flow law
G0 = 9.81

AU_KM = 1.495978707e8

DAY_S = 86400.0
HOUR_S = 3600.0

# Mission start epoch 2042-01-01 00:00 in seconds past J2000
# (15341 days minus the 12 h J2000 offset).
EPOCH_2042_01_01 = 15340.5 * DAY_S

# Saturn heliocentric orbit (standard mean elements, used for the Sun
# direction and the fixed-Jupiter distance; not precision ephemerides).
SATURN_HELIO_A_AU = 9.537
SATURN_HELIO_E = 0.0541
JUPITER_HELIO_A_AU = 5.2026
JUPITER_HELIO_E = 0.0484

# Saturn at perihelion, Jupiter at aphelion: minimum mutual distance.
JUPITER_MIN_DISTANCE_AU = (
    SATURN_HELIO_A_AU * (1.0 - SATURN_HELIO_E)
    - JUPITER_HELIO_A_AU * (1.0 + JUPITER_HELIO_E)
)

GM_SUN = 1.32712440018e11
GM_JUPITER = 1.26686534e8
