import numpy as np
import pytest
from scipy.linalg import expm

from vibroimpact.errors import TransversalityError
from vibroimpact.fixtures import bouncing_ball, free_monodromy_generator, impact_oscillator
from vibroimpact.integrator import IntegratorOptions, simulate, stroboscopic_map
from vibroimpact.model import ImpactEvent, State
from vibroimpact.orbit import solve_for_y0
from vibroimpact.variational import (
    flow_jacobian,
    jacobian_between,
    liouville_determinant,
    poincare_jacobian,
    saltation_matrix,
)

from conftest import rel_err
from oracles import fd_jacobian, hybrid_flow, saltation_fd, smooth_flow

TIGHT = IntegratorOptions(rel_tol=1e-13, abs_tol=1e-14, tol_event=1e-14)


def _free_arc(sys, t0, z0, t1, mu, opts=IntegratorOptions()):
    traj = simulate(sys, State(t0, np.asarray(z0, dtype=float)), t1, mu, opts)
    assert not traj.impacts
    return traj.segments[0]


def _impact_event(sys, tau, Y, zbar, mu):
    z_pre = np.concatenate(([0.0, -Y], zbar))
    z_post = np.concatenate(([0.0, sys.restitution(Y, mu) * Y], zbar))
    return ImpactEvent(tau=tau, z_pre=z_pre, z_post=z_post, Y=Y)


# ---------------------------------------------------------------------------
# flow Jacobian


def test_flow_jacobian_constant_field():
    ball = bouncing_ball(g=1.0)
    arc = _free_arc(ball, 0.0, [10.0, 1.0], 1.7, 0.0)
    assert np.allclose(flow_jacobian(ball, arc, 0.0), [[1.0, 1.7], [0.0, 1.0]], atol=1e-12)


def test_flow_jacobian_linear_matches_expm():
    sys = impact_oscillator()
    M = free_monodromy_generator(sys)
    arc = _free_arc(sys, 0.3, [1.5, 0.2], 2.8, 0.0)
    assert rel_err(flow_jacobian(sys, arc, 0.0), expm(M * 2.5)) <= 1e-8


def test_flow_jacobian_fd():
    sys = impact_oscillator()
    mu, t0, t1 = 0.3, -0.5, 1.5
    z0 = np.array([1.4, 0.1])
    arc = _free_arc(sys, t0, z0, t1, mu, TIGHT)
    J_fd = fd_jacobian(lambda z: smooth_flow(sys, t0, z, t1, mu), z0, 1e-6)
    assert rel_err(flow_jacobian(sys, arc, mu), J_fd) <= 1e-5


# ---------------------------------------------------------------------------
# saltation


def test_saltation_constant_field_closed_form():
    ball = bouncing_ball(g=2.0, r=0.7)
    Y = 0.4
    sd = saltation_matrix(ball, _impact_event(ball, 0.1, Y, [], 0.0), 0.0)
    a = -2.0
    assert np.allclose(sd.B, [[-0.7, 0.0], [-a * 1.7 / Y, -0.7]], rtol=1e-14)
    assert sd.r_tilde == 0.7


def test_saltation_det_speed_dependent():
    sys = impact_oscillator(r_speed=0.4)
    Y = 0.3
    sd = saltation_matrix(sys, _impact_event(sys, 0.2, Y, [], 0.1), 0.1)
    r = sys.restitution(Y, 0.1)
    assert sd.r_tilde != pytest.approx(r)
    assert abs(sd.det - sd.r_val * sd.r_tilde) <= 1e-8 * abs(sd.det)
    # r~ = d(r Y)/dY
    h = 1e-6
    rY = lambda v: sys.restitution(v, 0.1) * v
    assert sd.r_tilde == pytest.approx((rY(Y + h) - rY(Y - h)) / (2 * h), rel=1e-8)


def test_saltation_rejects_grazing():
    sys = impact_oscillator()
    with pytest.raises(TransversalityError):
        saltation_matrix(sys, _impact_event(sys, 0.0, 1e-9, [], 0.1), 0.1)


@pytest.mark.parametrize("Y", [0.5, 0.1])
@pytest.mark.parametrize("r_speed", [0.0, 0.4])
def test_saltation_matches_shrinking_window_fd(Y, r_speed):
    sys = impact_oscillator(r_speed=r_speed)
    mu, tau = 0.2, 0.7
    sd = saltation_matrix(sys, _impact_event(sys, tau, Y, [], mu), mu)
    B_fd = saltation_fd(sys, tau, np.array([0.0, -Y]), mu)
    nz = sd.B != 0
    assert np.max(np.abs(sd.B[nz] - B_fd[nz]) / np.abs(sd.B[nz])) <= 1e-4
    assert np.max(np.abs(B_fd[~nz])) <= 1e-3 * np.linalg.norm(sd.B)


def test_saltation_two_dof_matches_fd(coupled):
    mu, tau, Y = 0.3, 0.4, 0.25
    zbar = np.array([0.3, -0.2])
    sd = saltation_matrix(coupled, _impact_event(coupled, tau, Y, zbar, mu), mu)
    # sparsity: odd tangential rows carry no first-column entry
    assert sd.B[2, 0] == 0.0 and np.all(sd.B[0, 1:] == 0) and np.all(sd.B[1, 2:] == 0)
    assert np.allclose(sd.B[2:, 2:], np.eye(2))
    B_fd = saltation_fd(coupled, tau, np.concatenate(([0.0, -Y], zbar)), mu)
    nz = sd.B != 0
    assert np.max(np.abs(sd.B[nz] - B_fd[nz]) / np.abs(sd.B[nz])) <= 1e-4
    assert np.max(np.abs(B_fd[~nz])) <= 1e-3 * np.linalg.norm(sd.B)


@pytest.fixture(scope="module")
def coupled():
    from vibroimpact.fixtures import coupled_oscillator

    # tangential acceleration depends on y1 through damping, so the jump is nonzero
    return coupled_oscillator()


# ---------------------------------------------------------------------------
# map Jacobians


def test_poincare_jacobian_without_impacts_is_flow():
    sys = impact_oscillator()
    theta = sys.period / 4
    z0 = np.array([1.3, 0.1])
    mj = poincare_jacobian(sys, theta, z0, 0.0)
    assert not mj.saltations
    arc = _free_arc(sys, -theta, z0, sys.period - theta, 0.0)
    assert rel_err(mj.D, flow_jacobian(sys, arc, 0.0)) <= 1e-12
    assert rel_err(mj.D, expm(free_monodromy_generator(sys) * sys.period)) <= 1e-8


def _check_map_jacobian(sys, theta, z0, mu, periods, n_impacts):
    mj = poincare_jacobian(sys, theta, z0, mu, TIGHT, periods=periods)
    assert len(mj.saltations) == n_impacts
    t0 = -theta
    fun = lambda z: hybrid_flow(sys, t0, z, t0 + periods * sys.period, mu)[0]
    assert hybrid_flow(sys, t0, z0, t0 + periods * sys.period, mu)[1] == n_impacts
    D_fd = fd_jacobian(fun, z0, 1e-6)
    D_fd_own = fd_jacobian(lambda z: stroboscopic_map(sys, theta, z, mu, TIGHT, periods=periods), z0, 1e-6)
    return mj, D_fd, D_fd_own


def test_poincare_jacobian_one_impact_orbit(osc, osc_theta, osc_orbit_far):
    orb = osc_orbit_far
    mj, D_fd, D_own = _check_map_jacobian(osc, osc_theta, orb.z_star, orb.mu, 1, 1)
    assert rel_err(mj.D, D_fd) <= 1e-4
    assert rel_err(mj.D, D_own) <= 1e-4


def test_liouville_determinant(osc, osc_theta, osc_orbit_far):
    mj = poincare_jacobian(osc, osc_theta, osc_orbit_far.z_star, 0.5)
    pred = liouville_determinant(osc, mj.trajectory, 0.5)
    assert abs(np.linalg.det(mj.D) - pred) <= 1e-6 * abs(pred)
    # the damped linear oscillator: exp(-2 zeta T) r^2 per impact
    zeta = osc.params["zeta"]
    assert pred == pytest.approx(np.exp(-2 * zeta * osc.period) * 0.9**2, rel=1e-9)


def test_liouville_speed_dependent_restitution():
    sys = impact_oscillator(r_speed=0.3)
    mu, theta = 0.4, sys.period / 4
    mj = poincare_jacobian(sys, theta, np.array([0.5, -1.0]), mu)
    assert mj.saltations
    pred = liouville_determinant(sys, mj.trajectory, mu)
    assert abs(np.linalg.det(mj.D) - pred) <= 1e-6 * abs(pred)


def test_chain_rule(osc, osc_theta, osc_orbit_far):
    orb = osc_orbit_far
    t0, t1 = -osc_theta, osc.period - osc_theta
    full = jacobian_between(osc, t0, t1, orb.z_star, orb.mu)
    taus = [ev.tau for ev in full.trajectory.impacts]
    c = 0.5 * (t0 + taus[0]) if taus[0] - t0 > 0.1 else 0.5 * (taus[-1] + t1)
    first = jacobian_between(osc, t0, c, orb.z_star, orb.mu)
    second = jacobian_between(osc, c, t1, first.z_end, orb.mu)
    assert rel_err(second.D @ first.D, full.D) <= 1e-8


def test_split_jacobian_factors(osc, osc_theta, osc_orbit_far):
    orb = osc_orbit_far
    mj = poincare_jacobian(osc, osc_theta, orb.z_star, orb.mu, split=True)
    assert rel_err(mj.A_part @ mj.B_part, mj.D) <= 1e-14
    assert rel_err(mj.D, poincare_jacobian(osc, osc_theta, orb.z_star, orb.mu).D) <= 1e-8


def test_backward_jacobian_unsupported():
    sys = impact_oscillator()
    with pytest.raises(TransversalityError):
        jacobian_between(sys, 1.0, -5.0, np.array([0.5, 1.0]), 0.3)


# ---------------------------------------------------------------------------
# b21 blow-up near grazing


@pytest.fixture(scope="module")
def near_grazing_saltations(osc, osc_family):
    out = []
    for target in (1e-2, 5e-3, 2.5e-3):
        sol, _ = solve_for_y0(osc_family, target, 1e-12)
        ev = _impact_event(osc, sol.tau, sol.Y, sol.zbar, sol.mu)
        out.append(saltation_matrix(osc, ev, sol.mu))
    return out


def test_b21_asymptotics(osc, osc_family, near_grazing_saltations):
    phi0 = osc_family.grazing.phi0
    r = osc.restitution(0.0, 0.0)
    Ys = np.array([sd.Y01 for sd in near_grazing_saltations])
    prods = np.array([sd.b21 * sd.Y01 for sd in near_grazing_saltations])
    assert np.allclose(Ys, [1e-2, 5e-3, 2.5e-3], rtol=1e-8)
    limit = np.polyval(np.polyfit(Ys, prods, 1), 0.0)
    target = -(r + 1) * phi0
    assert abs(limit - target) <= 0.02 * abs(target)
    # O(Y) correction: deviation halves with Y
    dev = np.abs(prods - target)
    assert dev[1] < dev[0] and dev[2] < dev[1]


def test_poincare_jacobian_two_impact_orbit(two_impact_orbit):
    sys, theta, orb = two_impact_orbit
    assert orb.N_plus_1 == 2
    mj, D_fd, D_own = _check_map_jacobian(sys, theta, orb.z_star, orb.mu, 1, 2)
    assert rel_err(mj.D, D_fd) <= 1e-4
    assert rel_err(mj.D, D_own) <= 1e-4
    pred = liouville_determinant(sys, mj.trajectory, orb.mu)
    assert abs(np.linalg.det(mj.D) - pred) <= 1e-6 * abs(pred)
