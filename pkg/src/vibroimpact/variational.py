"""Flow Jacobians, saltation matrices and stroboscopic-map Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TransversalityError
from .integrator import DEFAULT_OPTIONS, Arc, IntegratorOptions, Trajectory, _Stepper, simulate
from .model import ImpactEvent, State, SystemDefinition


@dataclass(frozen=True)
class SaltationData:
    B: np.ndarray
    Y01: float
    r_val: float
    r_tilde: float
    f_pre: np.ndarray
    f_post: np.ndarray
    b21: float
    tau: float = float("nan")

    @property
    def det(self):
        return float(np.linalg.det(self.B))


def flow_jacobian(sys: SystemDefinition, arc: Arc, mu) -> np.ndarray:
    """d z(t_end) / d z(t_start) along an impact-free arc.

    Replays the arc's own step sequence with the variational equations
    attached, so the Jacobian belongs to the same discrete flow.
    """
    if arc.variational and arc.mu == mu:
        return arc.jac
    d = sys.dim
    st = _Stepper(sys, mu, arc.opts, variational=True)
    w = np.concatenate((arc.zs[0], np.eye(d).ravel()))
    k1 = st.fun(arc.ts[0], w)
    for i in range(len(arc.ts) - 1):
        h = arc.ts[i + 1] - arc.ts[i]
        w = st.substep(arc.ts[i], w, k1, h)
        k1 = st.fun(arc.ts[i + 1], w)
    return w[d:].reshape(d, d)


def saltation_matrix(sys: SystemDefinition, ev: ImpactEvent, mu, graze_tol=DEFAULT_OPTIONS.graze_tol) -> SaltationData:
    """Jump of the trajectory Jacobian across a transversal impact at a flat wall.

    Row 1 is ``(-r, 0, ..., 0)``, row 2 is ``(b21, -r~, 0, ...)`` with
    ``b21 = -(f1+ + r~ f1-)/Y``; the tangential rows are the identity plus a
    first column ``b_{2j,1} = -(fj+ - fj-)/Y`` (odd rows zero), where ``f+-``
    are the accelerations just after/before the impact.
    """
    Y = float(ev.Y)
    if ev.grazing_flag or not Y >= graze_tol:
        raise TransversalityError(f"approach speed {Y} below graze_tol {graze_tol}; saltation undefined")
    n = sys.n
    r = sys.restitution(Y, mu)
    r_tilde = r + sys.restitution_slope(Y, mu) * Y
    f_pre = sys.accel(ev.tau, ev.z_pre, mu)
    f_post = sys.accel(ev.tau, ev.z_post, mu)
    B = np.eye(2 * n)
    B[0, 0] = -r
    B[1, 0] = -(f_post[0] + r_tilde * f_pre[0]) / Y
    B[1, 1] = -r_tilde
    for j in range(1, n):
        B[2 * j + 1, 0] = -(f_post[j] - f_pre[j]) / Y
    return SaltationData(B=B, Y01=Y, r_val=r, r_tilde=r_tilde, f_pre=f_pre, f_post=f_post, b21=B[1, 0], tau=ev.tau)


@dataclass
class MapJacobian:
    """Jacobian of a hybrid flow map together with the pieces it was built from."""

    D: np.ndarray
    saltations: list
    trajectory: Trajectory
    flow_factors: list = field(default_factory=list)
    A_part: np.ndarray = None
    B_part: np.ndarray = None

    @property
    def z_end(self):
        return self.trajectory.z_final


def _compose(sys, traj: Trajectory, mu, graze_tol):
    d = sys.dim
    D = np.eye(d)
    salts, flows = [], []
    for kind, idx in traj.timeline:
        if kind == "arc":
            J = traj.segments[idx].jac
            flows.append(J)
            D = J @ D
        elif kind == "contact":
            ev = traj.impacts[idx]
            if traj.t1 < traj.t0:
                raise TransversalityError("Jacobians of backward maps are not supported")
            sd = saltation_matrix(sys, ev, mu, graze_tol)
            salts.append(sd)
            D = sd.B @ D
        else:
            raise TransversalityError("Jacobian requested across a sticking phase")
    return D, salts, flows


def jacobian_between(sys: SystemDefinition, t0, t1, z0, mu, opts: IntegratorOptions = DEFAULT_OPTIONS) -> MapJacobian:
    traj = simulate(sys, State(t0, np.asarray(z0, dtype=float)), t1, mu, opts, variational=True)
    D, salts, flows = _compose(sys, traj, mu, opts.graze_tol)
    return MapJacobian(D=D, saltations=salts, trajectory=traj, flow_factors=flows)


def poincare_jacobian(sys: SystemDefinition, theta, z0, mu, opts: IntegratorOptions = DEFAULT_OPTIONS,
                      phase=0.0, split=False, periods=1) -> MapJacobian:
    """Jacobian of the stroboscopic map started at ``phase - theta``.

    With ``split=True`` the map is cut at ``phase + theta`` and the factors
    ``B_part`` (from -theta to theta, containing the near-grazing impact) and
    ``A_part`` (from theta to T - theta) are returned as well.
    """
    t0 = phase - theta
    t_end = t0 + periods * sys.period
    if not split:
        return jacobian_between(sys, t0, t_end, z0, mu, opts)
    first = jacobian_between(sys, t0, phase + theta, z0, mu, opts)
    second = jacobian_between(sys, phase + theta, t_end, first.z_end, mu, opts)
    traj = Trajectory(sys=sys, mu=mu, t0=t0, t1=t_end)
    for part in (first.trajectory, second.trajectory):
        off_s, off_i, off_k = len(traj.segments), len(traj.impacts), len(traj.sticking)
        traj.segments += part.segments
        traj.impacts += part.impacts
        traj.sticking += part.sticking
        offs = {"arc": off_s, "contact": off_i, "stick": off_k}
        traj.timeline += [(kind, idx + offs[kind]) for kind, idx in part.timeline]
    traj.z_final = second.z_end
    return MapJacobian(
        D=second.D @ first.D,
        saltations=first.saltations + second.saltations,
        trajectory=traj,
        flow_factors=first.flow_factors + second.flow_factors,
        A_part=second.D,
        B_part=first.D,
    )


def arc_trace_integral(sys: SystemDefinition, arc: Arc, mu, n_quad=8) -> float:
    """Integral of trace(field Jacobian) along an arc (Gauss-Legendre on each step, dense output)."""
    from .model import field_jacobian

    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    total = 0.0
    for a, b in zip(arc.ts[:-1], arc.ts[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for x, w in zip(xg, wg):
            t = mid + half * x
            total += half * w * np.trace(field_jacobian(sys, t, arc.sample(t), mu))
    return float(total)


def liouville_determinant(sys: SystemDefinition, traj: Trajectory, mu, n_quad=8) -> float:
    """det of the map Jacobian predicted from trace integrals and impact determinants.

    ``exp(int trace J dt)`` along each arc times ``r * r~`` for every impact.
    """
    log_det = 0.0
    for kind, idx in traj.timeline:
        if kind == "arc":
            log_det += arc_trace_integral(sys, traj.segments[idx], mu, n_quad)
        elif kind == "contact":
            ev = traj.impacts[idx]
            if ev.grazing_flag:
                continue
            r = sys.restitution(ev.Y, mu)
            rt = r + sys.restitution_slope(ev.Y, mu) * ev.Y
            log_det += np.log(r * rt)
    return float(np.exp(log_det))
