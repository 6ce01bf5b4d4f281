import math

import numpy as np
import pytest

from ilmtour import constants
from ilmtour.bodies import PropulsionParams, get_body
from ilmtour.ephemeris import KeplerianEphemeris
from ilmtour.frames import OrbitalElements, InertialState, cart_to_kep, \
    kep_to_cart
from ilmtour.nbody import (
    PerturbationConfig, PropellantExhaustedError, accel_j2,
    accel_third_body, make_eom, propagate_perturbed, rank_perturbations,
    ranking_span, reference_initial_state,
)

GM_S = get_body("Saturn").gm
R_S = get_body("Saturn").radius_eq
J2_S = get_body("Saturn").j2


@pytest.fixture(scope="module")
def provider():
    return KeplerianEphemeris.from_catalog()


# ----------------------------------------------------------- third body

def test_third_body_collinear_midway():
    d = 4.0e5
    a = accel_third_body([d / 2, 0, 0], [d, 0, 0], 100.0)
    assert a[0] > 0.0          # net pull toward the perturber
    assert a[1] == a[2] == 0.0
    assert a[0] == pytest.approx(100.0 * (4.0 / d**2 - 1.0 / d**2))


def test_third_body_barycentric_oracle():
    # perturbation = (accel on sc) - (accel on Saturn), both from the
    # third body alone, computed in an inertial frame
    gm3 = 8.978e3
    r_sc = np.array([3.0e5, 1.0e5, -2.0e4])
    r_3 = np.array([-2.0e5, 4.0e5, 5.0e4])
    direct = gm3 * (r_3 - r_sc) / np.linalg.norm(r_3 - r_sc)**3
    frame = gm3 * r_3 / np.linalg.norm(r_3)**3
    a = accel_third_body(r_sc, r_3, gm3)
    assert np.allclose(a, direct - frame, rtol=1e-12)


def test_third_body_singularity():
    with pytest.raises(ValueError, match="coincides"):
        accel_third_body([1.0, 0, 0], [1.0, 0, 0], 1.0)


# ------------------------------------------------------------------- J2

def test_j2_equatorial_circular():
    r = 2.0 * R_S
    v = math.sqrt(GM_S / r)
    a = accel_j2([r, 0, 0], [0, v, 0], GM_S, R_S, J2_S)
    fac = 3.0 * GM_S * R_S**2 * J2_S / r**4
    assert a[0] == pytest.approx(-0.5 * fac, rel=1e-12)
    assert a[1] == pytest.approx(0.0, abs=1e-18)
    assert a[2] == pytest.approx(0.0, abs=1e-18)


def test_j2_polar_over_pole():
    r = 2.0 * R_S
    v = math.sqrt(GM_S / r)
    # polar orbit, spacecraft over the north pole, moving in -x
    a = accel_j2([0, 0, r], [-v, 0, 0], GM_S, R_S, J2_S)
    fac = 3.0 * GM_S * R_S**2 * J2_S / r**4
    assert a @ np.array([0, 0, 1.0]) == pytest.approx(fac, rel=1e-12)


def test_j2_subsurface_error():
    with pytest.raises(ValueError, match="inside"):
        accel_j2([0.5 * R_S, 0, 0], [0, 1, 0], GM_S, R_S, J2_S)


def test_j2_node_regression_oracle(provider):
    # secular node drift under Saturn J2 only vs the classical rate
    cfg = PerturbationConfig(provider, third_body=(),
                             j2_bodies=("Saturn",))
    a, e, i = 2.0 * R_S, 0.01, math.radians(60.0)
    el0 = OrbitalElements(a, e, i, 1.0, 0.5, 0.0)
    s0 = kep_to_cart(el0, GM_S)
    period = 2 * math.pi * math.sqrt(a**3 / GM_S)
    n_orb = 40
    y0 = np.concatenate([s0.pos, s0.vel, [1000.0]])
    sol = propagate_perturbed(y0, (0.0, n_orb * period), cfg,
                              rtol=1e-11, atol=1e-11)
    elf = cart_to_kep(InertialState(sol.y[:3, -1], sol.y[3:6, -1]), GM_S)
    p = a * (1 - e * e)
    n_mean = math.sqrt(GM_S / a**3)
    rate = -1.5 * J2_S * (R_S / p)**2 * n_mean * math.cos(i)
    drift = (elf.raan - el0.raan + math.pi) % (2 * math.pi) - math.pi
    # first-order secular rate; short-period terms leave ~1% residual
    assert drift == pytest.approx(rate * n_orb * period, rel=0.02)


# ----------------------------------------------------------------- eom

def test_kepler_oracle_ten_periods(provider):
    cfg = PerturbationConfig(provider, third_body=(), j2_bodies=())
    s0 = reference_initial_state("Rh", "Di")
    x0 = s0.pos[0]
    period = 2 * math.pi * math.sqrt(x0**3 / GM_S)
    y0 = np.concatenate([s0.pos, s0.vel, [1000.0]])
    sol = propagate_perturbed(y0, (0.0, 10 * period), cfg)
    assert np.linalg.norm(sol.y[:3, -1] - s0.pos) < 1e-3  # 1 m
    assert sol.y[6, -1] == 1000.0                          # no flow


def test_mass_flow_rate(provider):
    prop = PropulsionParams()
    assert prop.mdot == pytest.approx(2.294e-6, rel=1e-3)
    assert prop.mdot * constants.DAY_S == pytest.approx(0.1982, rel=1e-3)
    cfg = PerturbationConfig(provider, third_body=(), j2_bodies=())
    eom = make_eom(cfg, thrust=lambda t, y: [prop.t_max, 0.0, 0.0],
                   propulsion=prop)
    s0 = reference_initial_state("Rh", "Di")
    dy = eom(0.0, np.concatenate([s0.pos, s0.vel, [1000.0]]))
    assert dy[6] == pytest.approx(-prop.mdot, rel=1e-12)


def test_mass_strictly_decreasing_under_thrust(provider):
    cfg = PerturbationConfig(provider, third_body=(), j2_bodies=())
    s0 = reference_initial_state("En", "Mi")
    y0 = np.concatenate([s0.pos, s0.vel, [500.0]])

    def tangential(t, y):
        v = y[3:6]
        return 0.036 * v / np.linalg.norm(v)

    sol = propagate_perturbed(y0, (0.0, constants.DAY_S), cfg,
                              thrust=tangential, rtol=1e-10, atol=1e-10)
    m = sol.y[6]
    assert np.all(np.diff(m) < 0)


def test_propellant_floor(provider):
    cfg = PerturbationConfig(provider, third_body=(), j2_bodies=())
    eom = make_eom(cfg, thrust=lambda t, y: [0.036, 0.0, 0.0],
                   m_dry=400.0)
    s0 = reference_initial_state("Rh", "Di")
    with pytest.raises(PropellantExhaustedError):
        eom(0.0, np.concatenate([s0.pos, s0.vel, [400.0]]))


def test_energy_drift_equals_perturbation_work(provider):
    # d/dt (v^2/2 - gm/r) = a_p . v for ballistic perturbed motion
    from ilmtour.nbody import _perturbation
    from ilmtour.bodies import get_body as gb
    cfg = PerturbationConfig(provider)
    s0 = reference_initial_state("En", "Mi")
    y0 = np.concatenate([s0.pos, s0.vel, [1000.0]])
    e0 = constants.EPOCH_2042_01_01
    sol = propagate_perturbed(y0, (e0, e0 + 2 * constants.DAY_S), cfg,
                              rtol=1e-11, atol=1e-11, dense=True)
    cache = {"Saturn": gb("Saturn")}
    for bid, name in (("Mi", "Mimas"), ("En", "Enceladus"),
                      ("Te", "Tethys"), ("Di", "Dione"), ("Rh", "Rhea"),
                      ("Ti", "Titan")):
        cache[bid] = gb(name)

    def energy(y):
        return 0.5 * y[3:6] @ y[3:6] - GM_S / np.linalg.norm(y[:3])

    ts = np.linspace(sol.t[0], sol.t[-1], 4001)
    ys = sol.sol(ts)
    power = np.array([_perturbation(t, ys[:3, k], ys[3:6, k], cfg, cache)
                      @ ys[3:6, k] for k, t in enumerate(ts)])
    work = np.trapezoid(power, ts)
    drift = energy(ys[:, -1]) - energy(ys[:, 0])
    assert drift == pytest.approx(work, rel=0.01)


# ------------------------------------------------------ reference state

def test_reference_state_rh_di():
    s = reference_initial_state("Rh", "Di")
    assert s.pos[0] == pytest.approx(452220.0)
    assert s.vel[1] == pytest.approx(9.158, abs=5e-3)
    period = 2 * math.pi * math.sqrt(s.pos[0]**3 / GM_S)
    assert period / constants.DAY_S == pytest.approx(3.59, abs=0.01)
    s2 = reference_initial_state("Di", "Rh")
    assert np.array_equal(s.pos, s2.pos) and np.array_equal(s.vel, s2.vel)


def test_ranking_span_rh_di():
    s = reference_initial_state("Rh", "Di")
    assert ranking_span("Rh", "Di", s.pos[0]) == pytest.approx(17.5,
                                                               abs=0.1)
    assert ranking_span("Rh", "Di", s.pos[0]) == \
        ranking_span("Di", "Rh", s.pos[0])


def test_ranking_span_double_period():
    # T_moon and a spacecraft period of exactly half of it
    t_rh = get_body("Rhea").period
    x0 = (GM_S * (t_rh / 2 * constants.DAY_S / (2 * math.pi))**2)**(1 / 3)
    t_sc = 2 * math.pi * math.sqrt(x0**3 / GM_S) / constants.DAY_S
    span = 1.0 / abs(1.0 / t_sc - 1.0 / t_rh)
    assert span == pytest.approx(t_rh, rel=1e-9)


def test_ranking_span_equal_periods_error():
    t_rh = get_body("Rhea").period
    x0 = (GM_S * (t_rh * constants.DAY_S / (2 * math.pi))**2)**(1 / 3)
    with pytest.raises(ValueError, match="synodic"):
        ranking_span("Rh", "Di", x0)


# --------------------------------------------------------------- config

def test_config_moon_j2_requires_third_body(provider):
    with pytest.raises(ValueError, match="third-body"):
        PerturbationConfig(provider, third_body=("En",),
                           j2_bodies=("Saturn", "Mi"))


def test_config_without_moon_drops_both(provider):
    cfg = PerturbationConfig(provider)
    out = cfg.without("En 3B")
    assert "En" not in out.third_body and "En" not in out.j2_bodies
    out2 = cfg.without("Saturn J2")
    assert "Saturn" not in out2.j2_bodies
    assert out2.third_body == cfg.third_body


# ------------------------------------------------------------- ranking

@pytest.mark.slow
def test_rank_en_mi_leg(provider):
    rep = rank_perturbations(("En", "Mi"),
                             PerturbationConfig(provider),
                             rtol=1e-9, atol=1e-9)
    rows = {r.name: r for r in rep.rows}
    assert len(rows) == 15
    assert rows["Saturn J2"].verdict == "relevant"
    assert rows["Saturn J2"].log10_e_r == pytest.approx(4.0, abs=1.5)
    assert rows["Jupiter 3B"].verdict == "negligible"
    for bid in ("Mimas", "Enceladus", "Tethys", "Dione", "Rhea", "Titan"):
        assert rows[f"{bid} J2"].verdict == "negligible"
    d = rep.to_dict()
    assert d["leg"] == "En-Mi" and len(d["rows"]) == 15
