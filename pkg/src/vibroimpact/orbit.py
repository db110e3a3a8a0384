"""Periodic orbits as fixed points of the stroboscopic map, their continuation in
mu, and location of the grazing parameter value."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ContinuationStall,
    ConvergenceError,
    GrazingError,
    IntegratorError,
    OtherBifurcation,
    StructuralChangeError,
    TransversalityError,
    VibroImpactError,
)
from .integrator import DEFAULT_OPTIONS, IntegratorOptions, Trajectory, flow_smooth, simulate, stroboscopic_map
from .model import State, SystemDefinition, field_at, release_test
from .variational import MapJacobian, jacobian_between

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrbitOptions:
    newton_tol: float = 1e-10
    max_newton: int = 25
    max_damping: int = 8
    relaxed_tol: float = 1e-8
    dmu_init: float = 0.01
    dmu_min: float = 1e-12
    dmu_max: float = 0.05
    y0_stop: float = 1e-3
    approach_factor: float = 0.5
    max_samples: int = 400
    max_secant: int = 30


@dataclass(frozen=True)
class PeriodicOrbit:
    """Fixed point of S_{mu,theta}; impacts are (tau, Y, grazing_flag) in absolute time."""

    mu: float
    theta: float
    phase: float
    z_star: np.ndarray
    impacts: tuple
    residual: float
    jacobian: Optional[np.ndarray]
    newton_steps: int = 0
    tol_used: float = 1e-10
    impact_states: tuple = ()  # pre-contact states, aligned with ``impacts``

    @property
    def N_plus_1(self) -> int:
        return len(self.impacts)

    @property
    def n_applied(self) -> int:
        return sum(1 for imp in self.impacts if not imp[2])

    def grazing_index(self) -> Optional[int]:
        if not self.impacts:
            return None
        return int(np.argmin([imp[1] for imp in self.impacts]))

    @property
    def Y0(self) -> float:
        i = self.grazing_index()
        return float("nan") if i is None else float(self.impacts[i][1])

    @property
    def tau0(self) -> float:
        i = self.grazing_index()
        return float("nan") if i is None else float(self.impacts[i][0])

    @property
    def spectral_radius(self) -> float:
        if self.jacobian is None:
            return float("nan")
        return float(np.max(np.abs(np.linalg.eigvals(self.jacobian))))

    def normalized_impacts(self, T):
        """Impact times relative to the low-velocity impact, reduced to [0, T)."""
        t0 = self.tau0
        out = sorted(((tau - t0) % T, Y) for tau, Y, _ in self.impacts)
        if out and out[-1][0] > T - 1e-9:
            out = [(0.0, out[-1][1])] + out[:-1]
        return out


@dataclass(frozen=True)
class GrazingRecord:
    mu_star: float
    tau0: float  # normalised grazing phase (always 0)
    tau0_raw: float
    z_graze: np.ndarray
    zbar0: np.ndarray
    phi0: float
    Y0: float
    orbit: PeriodicOrbit
    iterations: int
    tol_used: float
    tangency: tuple  # (|x1|, |y1|) at the grazing phase on a fresh re-simulation

    def as_dict(self):
        return {
            "mu_star": self.mu_star,
            "tau0": self.tau0,
            "tau0_raw": self.tau0_raw,
            "z_graze": self.z_graze.tolist(),
            "zbar0": self.zbar0.tolist(),
            "phi0": self.phi0,
            "Y0": self.Y0,
            "newton_tol_used": self.tol_used,
            "secant_iterations": self.iterations,
            "tangency_x1": self.tangency[0],
            "tangency_y1": self.tangency[1],
        }


@dataclass
class OrbitFamily:
    sys: SystemDefinition
    theta: float
    phase: float
    samples: list = field(default_factory=list)
    grazing: Optional[GrazingRecord] = None
    stop_reason: str = ""

    @property
    def mus(self):
        return np.array([o.mu for o in self.samples])

    @property
    def y0s(self):
        return np.array([o.Y0 for o in self.samples])

    def theta0(self) -> float:
        T = self.sys.period
        first, last = T, 0.0
        for o in self.samples:
            rel = o.normalized_impacts(T)
            if len(rel) > 1:
                first = min(first, rel[1][0])
                last = max(last, rel[-1][0])
        return 0.5 * min(first, T - last)

    def default_theta(self) -> float:
        return 0.5 * self.theta0()

    def write_csv(self, path):
        T = self.sys.period
        k_max = max((o.N_plus_1 for o in self.samples), default=0)
        header = ["mu"] + [f"tau{k}" for k in range(k_max)] + [f"Y{k}" for k in range(k_max)]
        header += ["spectral_radius", "residual"]
        fmt = lambda v: format(float(v), ".17g")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for o in self.samples:
                rel = o.normalized_impacts(T)
                taus = [fmt(o.tau0 + tr) for tr, _ in rel] + [""] * (k_max - len(rel))
                ys = [fmt(Y) for _, Y in rel] + [""] * (k_max - len(rel))
                w.writerow([fmt(o.mu)] + taus + ys + [fmt(o.spectral_radius), fmt(o.residual)])


# ---------------------------------------------------------------------------
# Newton shooting


def _map_with_jacobian(sys, theta, z, mu, opts, phase, allow_grazing):
    t0 = phase - theta
    try:
        return jacobian_between(sys, t0, t0 + sys.period, z, mu, opts)
    except TransversalityError:
        if not allow_grazing:
            raise
        return _jacobian_skipping_grazing(sys, t0, t0 + sys.period, z, mu, opts)


def _jacobian_skipping_grazing(sys, t0, t1, z, mu, opts):
    """Jacobian with sub-threshold contacts treated as identity (non-impacting side)."""
    from .variational import saltation_matrix

    traj = simulate(sys, State(t0, np.asarray(z, dtype=float)), t1, mu, opts, variational=True)
    D = np.eye(sys.dim)
    salts = []
    for kind, idx in traj.timeline:
        if kind == "arc":
            D = traj.segments[idx].jac @ D
        elif kind == "contact":
            ev = traj.impacts[idx]
            if ev.grazing_flag:
                continue
            sd = saltation_matrix(sys, ev, mu, opts.graze_tol)
            salts.append(sd)
            D = sd.B @ D
        else:
            raise TransversalityError("Jacobian requested across a sticking phase")
    return MapJacobian(D=D, saltations=salts, trajectory=traj)


def _orbit_from(sys, theta, phase, mu, z, mj: MapJacobian, residual, steps, tol):
    evs = mj.trajectory.impacts
    imps = tuple((float(ev.tau), float(ev.Y), bool(ev.grazing_flag)) for ev in evs)
    return PeriodicOrbit(mu=float(mu), theta=float(theta), phase=float(phase), z_star=np.array(z, dtype=float),
                         impacts=imps, residual=float(residual), jacobian=mj.D.copy(), newton_steps=steps,
                         tol_used=tol, impact_states=tuple(ev.z_pre.copy() for ev in evs))


def find_periodic(sys: SystemDefinition, theta, mu, z_guess, opts: IntegratorOptions = DEFAULT_OPTIONS,
                  orbit_opts: OrbitOptions = OrbitOptions(), phase=0.0, newton_tol=None,
                  allow_structural=False, allow_grazing=False) -> PeriodicOrbit:
    """Damped Newton on S(z) - z with the hybrid Jacobian."""
    tol = orbit_opts.newton_tol if newton_tol is None else newton_tol
    z = np.array(z_guess, dtype=float)
    mj = _map_with_jacobian(sys, theta, z, mu, opts, phase, allow_grazing)
    F = mj.z_end - z
    res = float(np.linalg.norm(F))
    n_contacts = len(mj.trajectory.impacts)
    I = np.eye(sys.dim)
    for step in range(orbit_opts.max_newton + 1):
        if res <= tol:
            return _orbit_from(sys, theta, phase, mu, z, mj, res, step, tol)
        if step == orbit_opts.max_newton:
            break
        try:
            dz = np.linalg.solve(mj.D - I, -F)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Newton matrix (eigenvalue 1)", iterate=z, residual=res) from exc
        lam = 1.0
        accepted = False
        for _ in range(orbit_opts.max_damping):
            z_try = z + lam * dz
            if z_try[0] < 0:
                lam *= 0.5
                continue
            try:
                mj_try = _map_with_jacobian(sys, theta, z_try, mu, opts, phase, allow_grazing)
            except (TransversalityError, IntegratorError):
                lam *= 0.5
                continue
            F_try = mj_try.z_end - z_try
            res_try = float(np.linalg.norm(F_try))
            if len(mj_try.trajectory.impacts) != n_contacts and not allow_structural:
                if lam <= 0.25:
                    raise StructuralChangeError(
                        f"impact count changed from {n_contacts} to {len(mj_try.trajectory.impacts)} "
                        f"during Newton at mu={mu}", iterate=z_try, residual=res_try)
                lam *= 0.5
                continue
            if res_try < res or res_try <= tol:
                z, mj, F, res = z_try, mj_try, F_try, res_try
                n_contacts = len(mj.trajectory.impacts)
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise ConvergenceError(f"damped Newton stalled at mu={mu} (residual {res:.3e})", iterate=z, residual=res)
    raise ConvergenceError(f"Newton did not converge in {orbit_opts.max_newton} iterations at mu={mu}",
                           iterate=z, residual=res)


def settle(sys: SystemDefinition, theta, mu, z0, n_periods=200, opts: IntegratorOptions = DEFAULT_OPTIONS, phase=0.0):
    """Iterate the stroboscopic map (long transient) to get a Newton initial guess."""
    z = np.array(z0, dtype=float)
    for _ in range(n_periods):
        z = stroboscopic_map(sys, theta, z, mu, opts, phase=phase)
    return z


# ---------------------------------------------------------------------------
# continuation


def continue_family(sys: SystemDefinition, theta, mu_start, mu_end, orbit0: PeriodicOrbit,
                    opts: IntegratorOptions = DEFAULT_OPTIONS, orbit_opts: OrbitOptions = OrbitOptions(),
                    mu_grid=None) -> OrbitFamily:
    """Natural-parameter continuation of ``orbit0`` from ``mu_start`` toward ``mu_end``.

    The step adapts (halved on Newton failure, doubled after fast
    convergence) and is shortened so the linearly predicted grazing velocity
    Y0 never drops below ``approach_factor`` times its current value; the
    family therefore approaches a grazing point geometrically and stops once
    ``Y0 < y0_stop``. With ``mu_grid`` the listed parameter values are
    visited in order instead (substeps are inserted on failure, only grid
    points are recorded).
    """
    if abs(orbit0.mu - mu_start) > 1e-14 * max(1.0, abs(mu_start)):
        raise ValueError("orbit0 must be converged at mu_start")
    phase = orbit0.phase
    fam = OrbitFamily(sys=sys, theta=theta, phase=phase, samples=[orbit0])
    if mu_grid is not None:
        return _continue_on_grid(fam, list(mu_grid), opts, orbit_opts)

    sign = 1.0 if mu_end >= mu_start else -1.0
    dmu = orbit_opts.dmu_init
    while len(fam.samples) < orbit_opts.max_samples:
        last = fam.samples[-1]
        if (mu_end - last.mu) * sign <= 0:
            fam.stop_reason = "mu_end"
            return fam
        if last.Y0 < orbit_opts.y0_stop:
            fam.stop_reason = "grazing"
            return fam
        step = min(dmu, abs(mu_end - last.mu))
        if len(fam.samples) >= 2:
            prev = fam.samples[-2]
            slope = (last.Y0 - prev.Y0) / (last.mu - prev.mu)
            predicted = last.Y0 + slope * sign * step
            floor = orbit_opts.approach_factor * last.Y0
            if slope * sign < 0 and predicted < floor:
                step = (last.Y0 - floor) / abs(slope)
        mu_try = last.mu + sign * step
        try:
            orb = find_periodic(sys, theta, mu_try, _predict(fam, mu_try), opts, orbit_opts, phase=phase)
        except StructuralChangeError as exc:
            log.debug("structural change at mu=%g: %s", mu_try, exc)
            orb = None
            structural = True
        except (ConvergenceError, TransversalityError, IntegratorError) as exc:
            log.debug("continuation step failed at mu=%g: %s", mu_try, exc)
            orb = None
            structural = False
        if orb is not None and orb.N_plus_1 != last.N_plus_1:
            orb, structural = None, True
        if orb is None:
            if structural and step <= 1e3 * orbit_opts.dmu_min and last.Y0 > 10 * orbit_opts.y0_stop:
                raise OtherBifurcation(
                    f"impact count changes near mu={last.mu} while Y0={last.Y0:.3e} stays away from 0", family=fam)
            dmu = 0.5 * step
            if dmu < orbit_opts.dmu_min:
                raise ContinuationStall(f"continuation stalled at mu={last.mu}", family=fam)
            continue
        fam.samples.append(orb)
        if orb.newton_steps <= 3:
            dmu = min(2.0 * step, orbit_opts.dmu_max)
        else:
            dmu = step
    fam.stop_reason = "max_samples"
    return fam


def _continue_on_grid(fam, grid, opts, orbit_opts):
    sys, theta, phase = fam.sys, fam.theta, fam.phase
    for mu_target in grid:
        if abs(mu_target - fam.samples[-1].mu) <= 1e-15:
            continue
        current = fam.samples[-1]
        mu_now, z_now = current.mu, current.z_star
        step = mu_target - mu_now
        while True:
            mu_try = mu_now + step
            if (mu_target - mu_try) * np.sign(step) < 0:
                mu_try = mu_target
            try:
                orb = find_periodic(sys, theta, mu_try, z_now, opts, orbit_opts, phase=phase)
                if orb.N_plus_1 != current.N_plus_1:
                    raise StructuralChangeError("impact count changed")
            except VibroImpactError:
                step *= 0.5
                if abs(step) < orbit_opts.dmu_min:
                    raise ContinuationStall(f"continuation stalled near mu={mu_now}", family=fam)
                continue
            mu_now, z_now = orb.mu, orb.z_star
            if mu_try == mu_target:
                fam.samples.append(orb)
                break
    fam.stop_reason = "grid"
    return fam


def _predict(fam: OrbitFamily, mu):
    s = fam.samples
    if len(s) < 2:
        return s[-1].z_star.copy()
    a, b = s[-2], s[-1]
    w = (mu - b.mu) / (b.mu - a.mu)
    z = b.z_star + w * (b.z_star - a.z_star)
    z[0] = max(z[0], 0.0)
    return z


# ---------------------------------------------------------------------------
# grazing


def min_normal_distance(traj: Trajectory, t_near=None):
    """Closest approach to the wall along a trajectory: (t, z) at the minimum of x1.

    Contacts count as distance 0 at their instant. When ``t_near`` is given,
    the minimum closest in time to it among local minima is returned.
    """
    cands = []
    for ev in traj.impacts:
        cands.append((ev.tau, ev.z_pre.copy()))
    for arc in traj.segments:
        ys = arc.zs[:, 1]
        for i in range(len(arc.ts) - 1):
            if ys[i] < 0 <= ys[i + 1]:
                a, b = arc.ts[i], arc.ts[i + 1]
                tm = brentq(lambda t: arc.sample(t)[1], a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                cands.append((tm, arc.sample(tm)))
    if not cands:
        return None
    if t_near is None:
        return min(cands, key=lambda c: c[1][0])
    return min(cands, key=lambda c: (abs(c[0] - t_near), c[1][0]))


@dataclass(frozen=True)
class ImpactSectionSolution:
    """Periodic orbit parametrised at its low-velocity impact: u = (tau, Y, zbar).

    ``Y`` may come out negative: the residual is continued smoothly through
    the wall (departure speed ``r(0) Y``), which makes ``mu -> Y`` a smooth
    function across the grazing value.
    """

    mu: float
    tau: float
    Y: float
    zbar: np.ndarray
    residual: float
    newton_steps: int


def _section_guard(theta, T):
    return min(theta, 0.25 * T)


def _post_state(sys, mu, Y, zbar):
    Yp = max(Y, 0.0)
    r = sys.restitution(Yp, mu)
    rt = r + sys.restitution_slope(Yp, mu) * Yp
    return np.concatenate(([0.0, r * Y], zbar)), rt


def _impact_section_map(sys, mu, u, guard, opts):
    """Return (residual, jacobian) of u -> z(tau+T) - (0, -Y, zbar)."""
    tau, Y, zbar = u[0], u[1], u[2:]
    T = sys.period
    z_post, rt = _post_state(sys, mu, Y, zbar)
    arc1, _ = flow_smooth(sys, State(tau, z_post), tau + guard, mu, opts, variational=True, detect=False)
    mid = jacobian_between(sys, tau + guard, tau + T - guard, arc1.z1, mu, opts)
    arc3, _ = flow_smooth(sys, State(tau + T - guard, mid.z_end), tau + T, mu, opts, variational=True, detect=False)
    Phi = arc3.jac @ mid.D @ arc1.jac
    z_end = arc3.z1
    target = np.concatenate(([0.0, -Y], zbar))
    R = z_end - target
    d = sys.dim
    J = np.empty((d, d))
    J[:, 0] = field_at(sys, tau + T, z_end, mu) - Phi @ field_at(sys, tau, z_post, mu)
    J[:, 1] = Phi[:, 1] * rt
    J[1, 1] += 1.0
    J[:, 2:] = Phi[:, 2:] - np.eye(d)[:, 2:]
    return R, J


def solve_impact_section(sys: SystemDefinition, mu, u_guess, guard, opts: IntegratorOptions = DEFAULT_OPTIONS,
                         tol=1e-12, max_newton=25) -> ImpactSectionSolution:
    u = np.array(u_guess, dtype=float)
    R, J = _impact_section_map(sys, mu, u, guard, opts)
    res = float(np.linalg.norm(R))
    for step in range(max_newton + 1):
        if res <= tol:
            return ImpactSectionSolution(mu=float(mu), tau=float(u[0]), Y=float(u[1]), zbar=u[2:].copy(),
                                         residual=res, newton_steps=step)
        if step == max_newton:
            break
        du = np.linalg.solve(J, -R)
        lam = 1.0
        for _ in range(8):
            u_try = u + lam * du
            try:
                R_try, J_try = _impact_section_map(sys, mu, u_try, guard, opts)
            except (TransversalityError, IntegratorError):
                lam *= 0.5
                continue
            res_try = float(np.linalg.norm(R_try))
            if res_try < res:
                u, R, J, res = u_try, R_try, J_try, res_try
                break
            lam *= 0.5
        else:
            if res <= 100 * tol:
                return ImpactSectionSolution(mu=float(mu), tau=float(u[0]), Y=float(u[1]), zbar=u[2:].copy(),
                                             residual=res, newton_steps=step)
            raise ConvergenceError(f"impact-section Newton stalled at mu={mu}", iterate=u, residual=res)
    raise ConvergenceError(f"impact-section Newton did not converge at mu={mu}", iterate=u, residual=res)


def _section_u(orbit: PeriodicOrbit):
    i = orbit.grazing_index()
    tau, Y, _ = orbit.impacts[i]
    return np.concatenate(([tau, Y], orbit.impact_states[i][2:]))


def orbit_from_section(sys: SystemDefinition, sol: ImpactSectionSolution, theta, phase=0.0,
                       opts: IntegratorOptions = DEFAULT_OPTIONS) -> PeriodicOrbit:
    """Transport an impact-section solution to the stroboscopic section and evaluate S there."""
    T = sys.period
    guard = _section_guard(theta, T)
    s0 = phase - theta
    t_sec = s0 + math.ceil((sol.tau + guard - s0) / T) * T
    z_post, _ = _post_state(sys, sol.mu, sol.Y, sol.zbar)
    arc1, _ = flow_smooth(sys, State(sol.tau, z_post), sol.tau + guard, sol.mu, opts, detect=False)
    z = arc1.z1
    if t_sec > sol.tau + guard:
        z = simulate(sys, State(sol.tau + guard, z), t_sec, sol.mu, opts).z_final
    z_star = z
    mj = _map_with_jacobian(sys, theta, z_star, sol.mu, opts, phase, allow_grazing=True)
    res = float(np.linalg.norm(mj.z_end - z_star))
    return _orbit_from(sys, theta, phase, sol.mu, z_star, mj, res, sol.newton_steps, sol.residual)


def solve_for_y0(fam: OrbitFamily, target, tol, opts: IntegratorOptions = DEFAULT_OPTIONS,
                 orbit_opts: OrbitOptions = OrbitOptions()):
    """Secant iteration on mu -> Y0(mu) started from the last two family samples.

    Each evaluation solves for the periodic orbit in impact-section form, so
    iterates may step past the grazing value (Y0 < 0) without breaking the
    iteration. Returns ``(solution, iterations)``.
    """
    sys = fam.sys
    if len(fam.samples) < 2:
        raise GrazingError("need at least two family samples")
    a, b = fam.samples[-2], fam.samples[-1]
    if a.N_plus_1 == 0 or b.N_plus_1 == 0:
        raise GrazingError("family samples carry no impacts")
    guard = _section_guard(fam.theta, sys.period)
    pts = [(a.mu, a.Y0 - target, _section_u(a)), (b.mu, b.Y0 - target, _section_u(b))]
    if not pts[1][1] < pts[0][1]:
        raise GrazingError("family does not show Y0 decreasing toward the target")
    for it in range(1, orbit_opts.max_secant + 1):
        (m0, g0, u0), (m1, g1, u1) = pts[-2], pts[-1]
        if g1 == g0:
            raise GrazingError("secant breakdown: equal Y0 values")
        mu_new = m1 - g1 * (m1 - m0) / (g1 - g0)
        w = (mu_new - m1) / (m1 - m0)
        guess = u1 + w * (u1 - u0)
        try:
            sol = solve_impact_section(sys, mu_new, guess, guard, opts)
        except (ConvergenceError, np.linalg.LinAlgError) as exc:
            raise GrazingError(f"periodic orbit lost during secant iteration at mu={mu_new}: {exc}") from exc
        g = sol.Y - target
        pts.append((mu_new, g, np.concatenate(([sol.tau, sol.Y], sol.zbar))))
        log.debug("secant %d: mu=%.17g Y0-target=%.3e", it, mu_new, g)
        if abs(g) <= tol or (abs(g) <= opts.graze_tol and abs(mu_new - m1) <= 1e-15 * max(1.0, abs(mu_new))):
            return sol, it
    raise GrazingError("secant iteration on Y0 did not converge")


def detect_grazing(fam: OrbitFamily, opts: IntegratorOptions = DEFAULT_OPTIONS,
                   orbit_opts: OrbitOptions = OrbitOptions()) -> GrazingRecord:
    """Locate mu* with Y0(mu*) = 0 and characterise the grazing point.

    The secant is driven well below ``graze_tol`` (to ``1e-3 graze_tol``) so
    that the flagged grazing contact and a true tangency are
    indistinguishable at the fixed-point tolerance.
    """
    sys = fam.sys
    sol, iters = solve_for_y0(fam, 0.0, 1e-3 * opts.graze_tol, opts, orbit_opts)
    orb = orbit_from_section(sys, sol, fam.theta, fam.phase, opts)
    t0 = orb.phase - orb.theta
    traj = simulate(sys, State(t0, orb.z_star), t0 + sys.period, orb.mu, opts)
    hit = min_normal_distance(traj, sol.tau)
    if hit is None:
        raise GrazingError("grazing orbit never approaches the wall")
    tau_raw, zg = hit
    zg = np.array(zg, dtype=float)
    tangency = (abs(float(zg[0])), abs(float(zg[1])))
    phi0 = release_test(sys, tau_raw, zg[2:], orb.mu)
    if not phi0 > 0:
        raise GrazingError(f"degenerate grazing: phi0 = {phi0} <= 0 at mu={orb.mu}")
    tol_used = orbit_opts.newton_tol if orb.residual <= orbit_opts.newton_tol else orbit_opts.relaxed_tol
    if orb.residual > orbit_opts.relaxed_tol:
        raise GrazingError(f"grazing orbit residual {orb.residual:.3e} exceeds {orbit_opts.relaxed_tol}")
    rec = GrazingRecord(
        mu_star=orb.mu, tau0=0.0, tau0_raw=float(tau_raw), z_graze=zg, zbar0=zg[2:].copy(), phi0=float(phi0),
        Y0=float(sol.Y), orbit=orb, iterations=iters, tol_used=tol_used, tangency=tangency,
    )
    fam.grazing = rec
    return rec


def recheck_residual(orbit: PeriodicOrbit, sys: SystemDefinition, opts: IntegratorOptions = DEFAULT_OPTIONS):
    """Fixed-point residual from a fresh simulation (not Newton's bookkeeping)."""
    z1 = stroboscopic_map(sys, orbit.theta, orbit.z_star, orbit.mu, opts, phase=orbit.phase)
    return float(np.linalg.norm(z1 - orbit.z_star))
