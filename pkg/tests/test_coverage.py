import math

import numpy as np
import pytest

from ilmtour.bodies import system_for
from ilmtour.cr3bp import Cr3bpModel
from ilmtour.coverage import (
    BelowSurfaceError, coverage_samples, instant_band, map_to_csv,
    metrics_to_dict, moon_centered, overflight_map, polar_metrics,
)

R_EN = 252.1


def circular_orbit(radius, omega, t_end, n, incl_deg=0.0):
    """Synthetic moon-centered circular trajectory [km, km/s, s]."""
    t = np.linspace(0.0, t_end, n)
    ci, si = math.cos(math.radians(incl_deg)), math.sin(math.radians(incl_deg))
    x = radius * np.cos(omega * t)
    y = radius * np.sin(omega * t) * ci
    z = radius * np.sin(omega * t) * si
    vx = -radius * omega * np.sin(omega * t)
    vy = radius * omega * np.cos(omega * t) * ci
    vz = radius * omega * np.cos(omega * t) * si
    return t, np.column_stack([x, y, z, vx, vy, vz])


# --------------------------------------------------------- instant band

def test_band_collapses_at_grazing():
    lam1, lam2, alpha, h, phi = instant_band([R_EN + 1e-9, 0, 0, 0, 0, 0],
                                             R_EN)
    assert alpha == pytest.approx(0.0, abs=1e-3)
    assert lam1 == pytest.approx(phi, abs=1e-3)


def test_band_at_one_radius_altitude():
    lam1, lam2, alpha, h, phi = instant_band([2 * R_EN, 0, 0, 0, 0, 0],
                                             R_EN)
    assert h == pytest.approx(R_EN)
    assert alpha == pytest.approx(60.0, abs=1e-12)
    assert (lam1, lam2) == (pytest.approx(-60.0), pytest.approx(60.0))


def test_band_identity_along_orbit():
    t, y = circular_orbit(3 * R_EN, 1e-3, 5000.0, 40, incl_deg=45.0)
    for s in coverage_samples(t, y, R_EN, dt=200.0):
        alpha = math.degrees(math.acos(R_EN / (R_EN + s.h)))
        assert s.lambda2 - s.lambda1 == pytest.approx(2 * alpha, abs=1e-12)
        assert s.lambda1 <= s.phi <= s.lambda2


def test_below_surface_raises():
    with pytest.raises(BelowSurfaceError):
        instant_band([0.5 * R_EN, 0, 0, 0, 0, 0], R_EN)


# ------------------------------------------------------- overflight map

def test_static_map_is_alpha_cap():
    # hovering at h = R above (0 deg, 0 deg): cap of half-angle 60 deg
    t = np.arange(0.0, 3600.0, 60.0)
    y = np.column_stack([np.full_like(t, 2 * R_EN), 0 * t, 0 * t,
                         0 * t, 0 * t, 0 * t])
    cmap = overflight_map(t, y, R_EN, dt=60.0)
    tof = cmap.time_of_flight
    lam_g, beta_g = np.meshgrid(np.radians(cmap.lam), np.radians(cmap.beta))
    central = np.degrees(np.arccos(
        np.clip(np.cos(beta_g) * np.cos(lam_g), -1, 1)))
    inside = central <= 60.0 - 1e-9
    outside = central >= 60.0 + 1e-9
    assert np.allclose(cmap.tau[inside], tof, atol=1e-12)
    assert np.allclose(cmap.tau[outside], 0.0)


def test_single_step_counting_identity():
    t = np.array([0.0, 60.0])
    y = np.column_stack([[2 * R_EN] * 2, [0.0] * 2, [0.0] * 2,
                         [0.0] * 2, [0.0] * 2, [0.0] * 2])
    cmap = overflight_map(t, y, R_EN, dt=60.0)
    lam_g, beta_g = np.meshgrid(np.radians(cmap.lam), np.radians(cmap.beta))
    n_vis = np.count_nonzero(np.cos(beta_g) * np.cos(lam_g)
                             >= R_EN / (2 * R_EN))
    assert cmap.tau.sum() == pytest.approx(2 * 60.0 / 3600.0 * n_vis)


def test_longitude_shift_equivariance():
    t, y = circular_orbit(3 * R_EN, 2e-4, 20000.0, 60, incl_deg=30.0)
    shift = 30  # whole cells
    rot = math.radians(shift)
    c, s = math.cos(rot), math.sin(rot)
    m = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    y2 = y.copy()
    y2[:, :3] = y[:, :3] @ m.T
    y2[:, 3:] = y[:, 3:] @ m.T
    m1 = overflight_map(t, y, R_EN, dt=500.0)
    m2 = overflight_map(t, y2, R_EN, dt=500.0)
    assert np.allclose(np.roll(m1.tau, shift, axis=1), m2.tau, atol=1e-12)


def test_dt_refinement_bounded():
    t, y = circular_orbit(3 * R_EN, 2e-4, 20000.0, 80, incl_deg=30.0)
    coarse = overflight_map(t, y, R_EN, dt=400.0)
    fine = overflight_map(t, y, R_EN, dt=200.0)
    assert np.max(np.abs(coarse.tau - fine.tau)) <= 400.0 / 3600.0 + 1e-12


def test_map_nonnegative_and_coverage_range():
    t, y = circular_orbit(2 * R_EN, 5e-4, 10000.0, 50, incl_deg=60.0)
    cmap = overflight_map(t, y, R_EN, dt=300.0)
    assert np.all(cmap.tau >= 0)
    assert 0.0 <= cmap.surface_coverage <= 100.0


# -------------------------------------------------------- polar metrics

def test_equatorial_orbit_sees_no_poles():
    # low altitude: alpha ~ 23 deg < 85 deg colatitude margin
    t, y = circular_orbit(1.18 * R_EN, 5e-4, 20000.0, 80)
    cmap = overflight_map(t, y, R_EN, dt=300.0)
    met = polar_metrics(cmap, t, y, R_EN)
    assert met.np_visibility == 0.0 and met.sp_visibility == 0.0
    assert met.max_np_revisit == pytest.approx(met.time_of_flight)


def test_polar_orbit_sees_both_poles():
    t, y = circular_orbit(2 * R_EN, 5e-4, 2 * math.pi / 5e-4, 200,
                          incl_deg=90.0)
    cmap = overflight_map(t, y, R_EN, dt=120.0)
    met = polar_metrics(cmap, t, y, R_EN)
    assert met.np_visibility > 0 and met.sp_visibility > 0
    assert met.np_visibility <= met.time_of_flight
    assert met.max_np_revisit < met.time_of_flight


def test_metrics_dict_keys():
    t, y = circular_orbit(2 * R_EN, 5e-4, 6000.0, 30)
    cmap = overflight_map(t, y, R_EN, dt=300.0)
    d = metrics_to_dict(polar_metrics(cmap, t, y, R_EN))
    assert d["cap_half_angle_deg"] == 5.0
    assert set(d) == {"surface_coverage_pct", "time_of_flight_hour",
                      "np_visibility_hour", "sp_visibility_hour",
                      "max_np_revisit_hour", "max_sp_revisit_hour",
                      "cap_half_angle_deg"}


# ------------------------------------------------------------ plumbing

def test_moon_centered_units():
    m = Cr3bpModel(system_for("SEn"))
    sys = m.system
    state = np.concatenate([m.secondary_pos + [1e-3, 0, 0], [0, 1e-3, 0]])
    ts, ys = moon_centered(m, [2.0], [state])
    assert ts[0] == pytest.approx(2.0 * sys.time_unit)
    assert ys[0, 0] == pytest.approx(1e-3 * sys.length_unit)
    assert ys[0, 4] == pytest.approx(1e-3 * sys.velocity_unit)


def test_map_csv_export(tmp_path):
    t, y = circular_orbit(2 * R_EN, 5e-4, 3000.0, 20)
    cmap = overflight_map(t, y, R_EN, grid_deg=10.0, dt=300.0)
    path = tmp_path / "tau.csv"
    map_to_csv(path, cmap)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "lambda_deg,beta_deg,tau_hour"
    assert len(lines) == 1 + 36 * 18
