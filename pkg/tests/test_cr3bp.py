import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ilmtour.bodies import SystemParams, get_body, make_system, system_for
from ilmtour.cr3bp import Cr3bpModel, SingularityError, classical_model


def _classical_reference_eom(mu, state):
    """Independently coded classical CR3BP, same sign convention.

    Primary at (+mu, 0, 0), secondary at (mu-1, 0, 0), mean motion 1.
    Written from the textbook equations, not by calling the package.
    """
    x, y, z, vx, vy, vz = state
    r1 = math.sqrt((x - mu) ** 2 + y**2 + z**2)
    r2 = math.sqrt((x + 1 - mu) ** 2 + y**2 + z**2)
    ox = x - (1 - mu) * (x - mu) / r1**3 - mu * (x + 1 - mu) / r2**3
    oy = y - (1 - mu) * y / r1**3 - mu * y / r2**3
    oz = -(1 - mu) * z / r1**3 - mu * z / r2**3
    return np.array([vx, vy, vz, ox + 2 * vy, oy - 2 * vx, oz])


def _classical_reference_jacobi(mu, state):
    x, y, z, vx, vy, vz = state
    r1 = math.sqrt((x - mu) ** 2 + y**2 + z**2)
    r2 = math.sqrt((x + 1 - mu) ** 2 + y**2 + z**2)
    # note the constant: the adopted potential carries mu(1-mu)/2 on top of
    # the quadratic form, which itself contributes another mu(1-mu)/2
    omega = 0.5 * (x**2 + y**2) + (1 - mu) / r1 + mu / r2 + mu * (1 - mu)
    return 2 * omega - (vx**2 + vy**2 + vz**2)


@pytest.fixture(scope="module")
def sen():
    return Cr3bpModel(system_for("SEn"))


def _random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    states = rng.uniform(-1.5, 1.5, size=(n, 6))
    states[:, 3:] *= 1.5
    return states


def test_classical_limit_matches_reference():
    model = classical_model(system_for("SEn"))
    assert model.n == 1.0
    mu = model.mu
    for state in _random_states(50, seed=3):
        np.testing.assert_allclose(
            model.eom(0.0, state), _classical_reference_eom(mu, state),
            rtol=1e-12, atol=1e-12)
        assert model.jacobi_constant(state) == pytest.approx(
            _classical_reference_jacobi(mu, state), rel=1e-12)


def test_gradient_matches_finite_differences(sen):
    h = 1e-6
    for pos in _random_states(30, seed=4)[:, :3]:
        grad = sen.omega_gradient(pos)
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            fd = (sen.effective_potential(pos + dp)
                  - sen.effective_potential(pos - dp)) / (2 * h)
            assert grad[k] == pytest.approx(fd, rel=2e-7, abs=2e-7)


def test_jacobian_matches_finite_differences(sen):
    h = 1e-7
    for state in _random_states(100, seed=5):
        jac = sen.jacobian(0.0, state)
        fd = np.empty((6, 6))
        for k in range(6):
            dp = np.zeros(6)
            dp[k] = h
            fd[:, k] = (sen.eom(0.0, state + dp) - sen.eom(0.0, state - dp)) / (2 * h)
        scale = np.abs(jac).max() + 1.0
        np.testing.assert_allclose(jac, fd, atol=1e-6 * scale)


def test_jacobian_structure(sen):
    state = np.array([-0.99, 0.01, 0.002, 0.1, -0.2, 0.05])
    jac = sen.jacobian(0.0, state)
    np.testing.assert_array_equal(jac[0:3, 3:6], np.eye(3))
    np.testing.assert_array_equal(jac[0:3, 0:3], np.zeros((3, 3)))
    assert jac[3, 4] == pytest.approx(2 * sen.n)
    assert jac[4, 3] == pytest.approx(-2 * sen.n)
    assert np.trace(jac) == 0.0
    np.testing.assert_allclose(jac[3:6, 0:3], jac[3:6, 0:3].T, atol=1e-14)


def test_jacobi_gradient_identity(sen):
    # d(C_J)/dt = 0 along the flow: grad(C_J) . f = 0 exactly
    for state in _random_states(20, seed=6):
        f = sen.eom(0.0, state)
        g = sen.omega_gradient(state[:3])
        dcj = 2 * float(g @ f[:3]) - 2 * float(state[3:] @ f[3:])
        assert abs(dcj) < 1e-11


def test_eom_xz_mirror_symmetry(sen):
    # (y, vx, vz) -> (-y, -vx, -vz) with t -> -t maps solutions to solutions
    s = np.array([-0.997, 0.013, 0.004, 0.02, -0.05, 0.01])
    mirror = np.array([1, -1, 1, -1, 1, -1.0])
    f = sen.eom(0.0, s)
    fm = sen.eom(0.0, mirror * s)
    np.testing.assert_allclose(fm, -mirror * f, atol=1e-14)


def test_lagrange_points_enceladus(sen):
    pts = {p.label: p for p in sen.lagrange_points()}
    assert pts["L1"].pos[0] == pytest.approx(-0.9960222, abs=5e-6)
    assert pts["L2"].pos[0] == pytest.approx(-1.0039880, abs=5e-6)
    # gradient residual at every equilibrium
    for p in pts.values():
        assert np.abs(sen.omega_gradient(p.pos)).max() < 1e-12
    # ordering along the x-axis: L2 < moon < L1 < barycenter < L3
    assert pts["L2"].pos[0] < sen.mu - 1.0 < pts["L1"].pos[0] < sen.mu


def test_lagrange_points_all_systems():
    for label in ("SMi", "SEn", "STe", "SDi", "SRh"):
        model = Cr3bpModel(system_for(label))
        pts = {p.label: p for p in model.lagrange_points()}
        assert len(pts) == 5
        for p in pts.values():
            assert np.abs(model.omega_gradient(p.pos)).max() < 1e-12
        # oblateness pushes C_J(L1) above the classical value 3 + O(mu^(2/3))
        assert 3.0 < pts["L1"].cj < 3.2


def test_lagrange_test_mass_limit():
    # as mu -> 0 both collinear neighbors collapse onto the secondary at x = -1
    sat = get_body("Saturn")
    sys0 = system_for("SEn")
    tiny = SystemParams(
        primary=sys0.primary, secondary=sys0.secondary, mu_ratio=1e-12,
        a1=0.0, a2=0.0, n_norm=1.0,
        length_unit=sys0.length_unit, time_unit=sys0.time_unit)
    pts = {p.label: p for p in Cr3bpModel(tiny).lagrange_points()}
    assert pts["L1"].pos[0] == pytest.approx(-1.0, abs=1e-4)
    assert pts["L2"].pos[0] == pytest.approx(-1.0, abs=1e-4)
    assert sat is not None


def test_effective_potential_symmetry(sen):
    pos = np.array([-0.98, 0.07, 0.03])
    for flip in ([1, -1, 1], [1, 1, -1], [1, -1, -1]):
        assert sen.effective_potential(pos * np.array(flip)) == pytest.approx(
            sen.effective_potential(pos), rel=1e-14)


def test_singularity_raises(sen):
    with pytest.raises(SingularityError):
        sen.effective_potential([sen.mu, 0.0, 0.0])
    with pytest.raises(SingularityError):
        sen.eom(0.0, np.array([sen.mu - 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]))


@settings(max_examples=30)
@given(
    x=st.floats(-1.3, -0.7), y=st.floats(-0.5, 0.5), z=st.floats(-0.3, 0.3),
    vx=st.floats(-1, 1), vy=st.floats(-1, 1), vz=st.floats(-1, 1),
)
def test_jacobi_time_independent(x, y, z, vx, vy, vz):
    model = Cr3bpModel(system_for("SDi"))
    s = np.array([x, y, z, vx, vy, vz])
    r2 = np.linalg.norm(s[:3] - model.secondary_pos)
    r1 = np.linalg.norm(s[:3] - model.primary_pos)
    if min(r1, r2) < 1e-3:
        return
    # eom has no explicit time dependence
    np.testing.assert_array_equal(model.eom(0.0, s), model.eom(17.3, s))
