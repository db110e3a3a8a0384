"""Grazing analysis: the limit matrix A, reduced matrices, the two sign/hyperbolicity
conditions, eigenvalue asymptotics of D near grazing and the quadratic shape of
the set of wall-touching initial states."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ExtrapolationError, GrazingError
from .integrator import DEFAULT_OPTIONS, IntegratorOptions, flow_smooth
from .model import State, SystemDefinition
from .orbit import OrbitFamily
from .variational import arc_trace_integral, jacobian_between, liouville_determinant, poincare_jacobian

log = logging.getLogger(__name__)

HYPERBOLIC_MARGIN = 1e-6
DEFAULT_THETA_FRACTIONS = (1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128, 1 / 256)


@dataclass
class GrazingMatrices:
    A: np.ndarray
    A_inv: np.ndarray
    Delta0: float
    theta_sequence: np.ndarray
    estimates: list  # Jacobians at each theta
    tableau_error: float
    monotone: bool
    liouville_det: float = float("nan")
    A_direct: Optional[np.ndarray] = None
    A_bar: Optional[np.ndarray] = None
    A_cal_bar: Optional[np.ndarray] = None

    @property
    def a(self):
        return self.A

    @property
    def alpha(self):
        return self.A_inv

    @property
    def n(self):
        return self.A.shape[0] // 2

    def as_dict(self):
        return {
            "A": self.A.tolist(),
            "A_inv": self.A_inv.tolist(),
            "Delta0": self.Delta0,
            "liouville_det": self.liouville_det,
            "A_direct": None if self.A_direct is None else self.A_direct.tolist(),
            "theta_sequence": self.theta_sequence.tolist(),
            "extrapolation_error": self.tableau_error,
            "extrapolation_monotone": self.monotone,
            "A_bar": None if self.A_bar is None else self.A_bar.tolist(),
            "A_cal_bar": None if self.A_cal_bar is None else self.A_cal_bar.tolist(),
        }


def _neville_at_zero(xs, mats):
    """Polynomial extrapolation of mats(x) to x = 0; returns (value, error estimate)."""
    m = len(xs)
    P = [list(mats)]
    for j in range(1, m):
        row = []
        for i in range(j, m):
            xi, xij = xs[i], xs[i - j]
            row.append((xi * P[j - 1][i - j] - xij * P[j - 1][i - j + 1]) / (xi - xij))
        P.append(row)
    best = P[-1][0]
    err = float(np.linalg.norm(best - P[-2][-1])) if m > 1 else float("inf")
    return best, err


def grazing_window_jacobian(sys: SystemDefinition, family: OrbitFamily, theta, opts: IntegratorOptions = DEFAULT_OPTIONS):
    """Jacobian from tau0 + theta to tau0 + T - theta along the grazing orbit (grazing contact excluded)."""
    rec = family.grazing
    if rec is None:
        raise GrazingError("family has no grazing record")
    t0 = rec.tau0_raw
    arc, _ = flow_smooth(sys, State(t0, rec.z_graze), t0 + theta, rec.mu_star, opts, detect=False)
    return jacobian_between(sys, t0 + theta, t0 + sys.period - theta, arc.z1, rec.mu_star, opts)


def grazing_period_jacobian(sys: SystemDefinition, family: OrbitFamily, opts: IntegratorOptions = DEFAULT_OPTIONS):
    """Direct theta = 0 evaluation: one period from the grazing contact to its return.

    Contact detection is switched off within ``theta0/2`` of both ends so the
    tangential start and finish are not mistaken for impacts. Returns
    ``(jacobian, liouville_det)``.
    """
    rec = family.grazing
    t0, mu = rec.tau0_raw, rec.mu_star
    T = sys.period
    g = 0.5 * family.theta0()
    first, _ = flow_smooth(sys, State(t0, rec.z_graze), t0 + g, mu, opts, variational=True, detect=False)
    mid = jacobian_between(sys, t0 + g, t0 + T - g, first.z1, mu, opts)
    last, _ = flow_smooth(sys, State(t0 + T - g, mid.z_end), t0 + T, mu, opts, variational=True, detect=False)
    J = last.jac @ mid.D @ first.jac
    log_det = arc_trace_integral(sys, first, mu) + arc_trace_integral(sys, last, mu)
    det = math.exp(log_det) * liouville_determinant(sys, mid.trajectory, mu)
    return J, det


def limit_matrix_A(sys: SystemDefinition, family: OrbitFamily, theta_seq=None,
                   opts: IntegratorOptions = DEFAULT_OPTIONS, strict=True) -> GrazingMatrices:
    """theta -> 0 limit of the one-period Jacobian along the grazing orbit.

    The Jacobian is evaluated at mu* on the grazing orbit itself for each
    theta in ``theta_seq`` (N transversal impacts included, the grazing
    contact excluded) and extrapolated to theta = 0 with a Neville tableau.
    """
    if family.grazing is None:
        raise GrazingError("family has no grazing record")
    if theta_seq is None:
        th0 = family.theta0()
        theta_seq = [th0 * f for f in DEFAULT_THETA_FRACTIONS]
    thetas = np.asarray(sorted(theta_seq, reverse=True), dtype=float)
    if len(thetas) < 2 or np.any(thetas <= 0):
        raise ValueError("theta_seq needs at least two positive values")
    parts = [grazing_window_jacobian(sys, family, th, opts) for th in thetas]
    mats = [p.D for p in parts]
    A, err = _neville_at_zero(list(thetas), mats)
    diffs = [float(np.linalg.norm(mats[i + 1] - mats[i])) for i in range(len(mats) - 1)]
    monotone = all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1))
    normA = float(np.linalg.norm(A))
    diag = dict(thetas=thetas.tolist(), successive_differences=diffs, tableau_error=err)
    if err > 1e-3 * normA:
        msg = f"theta extrapolation did not settle: error {err:.3e} vs |A| {normA:.3e}"
        if strict:
            raise ExtrapolationError(msg, diagnostics=diag)
        log.warning(msg)
    A_direct, lv = grazing_period_jacobian(sys, family, opts)
    G = GrazingMatrices(
        A=A, A_inv=np.linalg.inv(A), Delta0=float(np.linalg.det(A)), theta_sequence=thetas, estimates=mats,
        tableau_error=err, monotone=monotone, liouville_det=lv, A_direct=A_direct,
    )
    return reduced_matrices(G)


def _reduce(M):
    m12 = M[0, 1]
    if abs(m12) <= 1e-12:
        return None
    k = M.shape[0] - 2
    out = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            out[i, j] = -M[0, j + 2] * M[i + 2, 1] / m12 + M[i + 2, j + 2]
    return out


def reduced_matrices(G: GrazingMatrices) -> GrazingMatrices:
    """Fill A_bar (from A) and A_cal_bar (from A^-1); both absent when n = 1."""
    if G.n == 1:
        G.A_bar = None
        G.A_cal_bar = None
        return G
    G.A_bar = _reduce(G.A)
    G.A_cal_bar = _reduce(G.A_inv)
    if G.A_bar is None:
        log.warning("a12 vanishes: reduced matrix undefined")
    return G


def hyperbolicity_margin(M) -> float:
    ev = np.linalg.eigvals(M)
    return float(np.min(np.abs(np.abs(ev) - 1.0)))


@dataclass(frozen=True)
class ConditionCheck:
    hyperbolic_bar: object  # True / False / "inconclusive"
    margin: Optional[float]
    m12: float
    ineq_m12: bool
    sum_value: float
    square_12: float
    ineq_sum: bool

    @property
    def holds(self):
        return self.hyperbolic_bar is True and self.ineq_m12 and self.ineq_sum

    def as_dict(self):
        return {
            "hyperbolic_bar": self.hyperbolic_bar,
            "margin": self.margin,
            "m12": self.m12,
            "m12_positive": self.ineq_m12,
            "sum_1k_k2": self.sum_value,
            "square_12": self.square_12,
            "sum_negative": self.ineq_sum,
            "holds": self.holds,
        }


@dataclass(frozen=True)
class ConditionReport:
    cond3: ConditionCheck
    cond4: ConditionCheck
    chosen_branch: Optional[str]
    halfspace_separation: bool

    def as_dict(self):
        return {
            "cond3": self.cond3.as_dict(),
            "cond4": self.cond4.as_dict(),
            "chosen_branch": self.chosen_branch,
            "halfspace_separation": self.halfspace_separation,
        }


def _check(M, M_bar, n):
    d = M.shape[0]
    s = float(sum(M[0, k] * M[k, 1] for k in range(d)))
    sq = float((M @ M)[0, 1])
    if n == 1:
        hyp, margin = True, None
    elif M_bar is None:
        hyp, margin = False, None
    else:
        margin = hyperbolicity_margin(M_bar)
        hyp = True if margin > HYPERBOLIC_MARGIN else "inconclusive"
    return ConditionCheck(hyperbolic_bar=hyp, margin=margin, m12=float(M[0, 1]), ineq_m12=bool(M[0, 1] > 0),
                          sum_value=s, square_12=sq, ineq_sum=bool(s < 0))


def check_conditions(G: GrazingMatrices) -> ConditionReport:
    c3 = _check(G.A, G.A_bar, G.n)
    c4 = _check(G.A_inv, G.A_cal_bar, G.n)
    branch = "condition3" if c3.holds else ("condition4" if c4.holds else None)
    A2 = G.A @ G.A
    sep = bool(G.A[0, 1] * A2[0, 1] < 0)
    return ConditionReport(cond3=c3, cond4=c4, chosen_branch=branch, halfspace_separation=sep)


def predicted_lambda_plus(r, a12, phi0, Y0):
    return -(r + 1) * a12 * phi0 / Y0


def predicted_lambda_minus(r, alpha12, phi0, Y0):
    return r**2 * Y0 / ((r + 1) * phi0 * alpha12)


def _line_angle(u, v):
    u = np.real_if_close(u)
    c = abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(math.acos(min(1.0, c)))


@dataclass
class SpectralAsymptotics:
    mu: np.ndarray
    Y0: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    lambda_plus_pred: np.ndarray
    lambda_minus_pred: np.ndarray
    det_D: np.ndarray
    det_pred: float
    angle_u_plus: np.ndarray
    angle_u_minus: np.ndarray
    ambiguous: list
    loglog_slope: float
    lambda_plus_Y0_limit: float
    lambda_plus_Y0_target: float
    correction_slope: float

    @property
    def rel_dev_plus(self):
        return np.abs(self.lambda_plus / self.lambda_plus_pred - 1)

    @property
    def rel_dev_minus(self):
        return np.abs(self.lambda_minus / self.lambda_minus_pred - 1)

    @property
    def limit_rel_error(self):
        return abs(self.lambda_plus_Y0_limit / self.lambda_plus_Y0_target - 1)

    @property
    def det_rel_error(self):
        return abs(self.det_D[-1] / self.det_pred - 1)

    def as_dict(self):
        return {
            "mu": self.mu.tolist(),
            "Y0": self.Y0.tolist(),
            "lambda_plus": self.lambda_plus.tolist(),
            "lambda_minus": self.lambda_minus.tolist(),
            "lambda_plus_pred": self.lambda_plus_pred.tolist(),
            "lambda_minus_pred": self.lambda_minus_pred.tolist(),
            "rel_dev_plus": self.rel_dev_plus.tolist(),
            "rel_dev_minus": self.rel_dev_minus.tolist(),
            "det_D": self.det_D.tolist(),
            "det_pred": self.det_pred,
            "det_rel_error_smallest_Y0": self.det_rel_error,
            "angle_u_plus_A2": self.angle_u_plus.tolist(),
            "angle_u_minus_e2": self.angle_u_minus.tolist(),
            "pairing_ambiguous": self.ambiguous,
            "loglog_slope": self.loglog_slope,
            "lambda_plus_Y0_limit": self.lambda_plus_Y0_limit,
            "lambda_plus_Y0_target": self.lambda_plus_Y0_target,
            "limit_rel_error": self.limit_rel_error,
            "correction_slope": self.correction_slope,
        }


def pre_grazing_samples(family: OrbitFamily, graze_tol=DEFAULT_OPTIONS.graze_tol):
    return [o for o in family.samples if o.N_plus_1 > 0 and o.Y0 > graze_tol and o.jacobian is not None]


def spectral_asymptotics(sys: SystemDefinition, family: OrbitFamily, G: GrazingMatrices, n_fit=5,
                         n_extrap=4) -> SpectralAsymptotics:
    """Compare the eigen-structure of D along the family with the near-grazing predictions."""
    rec = family.grazing
    if rec is None:
        raise GrazingError("family has no grazing record")
    samples = pre_grazing_samples(family)
    if len(samples) < 4:
        raise GrazingError("need at least 4 pre-grazing samples")
    samples = sorted(samples, key=lambda o: -o.Y0)
    r = sys.restitution(0.0, rec.mu_star)
    a12, alpha12 = G.A[0, 1], G.A_inv[0, 1]
    A2 = G.A[:, 1]
    e2 = np.zeros(sys.dim)
    e2[1] = 1.0
    lp, lm, dets, ang_p, ang_m, amb = [], [], [], [], [], []
    for o in samples:
        w, V = np.linalg.eig(o.jacobian)
        mags = np.abs(w)
        ip, im = int(np.argmax(mags)), int(np.argmin(mags))
        close_p = np.sum(np.abs(mags - mags[ip]) <= 0.01 * mags[ip]) > 1
        close_m = np.sum(np.abs(mags - mags[im]) <= 0.01 * mags[im]) > 1
        if close_p or close_m:
            amb.append(o.mu)
        lp.append(float(np.real(w[ip])) if abs(w[ip].imag) < 1e-12 * mags[ip] else float(mags[ip]))
        lm.append(float(np.real(w[im])) if abs(w[im].imag) < 1e-12 * max(mags[im], 1e-300) else float(mags[im]))
        ang_p.append(_line_angle(V[:, ip], A2))
        ang_m.append(_line_angle(V[:, im], e2))
        dets.append(float(np.linalg.det(o.jacobian)))
    Y0 = np.array([o.Y0 for o in samples])
    lp, lm = np.array(lp), np.array(lm)
    rho = np.abs(lp)
    k = min(n_fit, len(samples))
    slope = float(np.polyfit(np.log(Y0[-k:]), np.log(rho[-k:]), 1)[0])
    k = min(n_extrap, len(samples))
    coef = np.polyfit(Y0[-k:], lp[-k:] * Y0[-k:], 1)
    limit = float(coef[1])
    target = -(r + 1) * a12 * rec.phi0
    return SpectralAsymptotics(
        mu=np.array([o.mu for o in samples]), Y0=Y0, lambda_plus=lp, lambda_minus=lm,
        lambda_plus_pred=predicted_lambda_plus(r, a12, rec.phi0, Y0),
        lambda_minus_pred=predicted_lambda_minus(r, alpha12, rec.phi0, Y0),
        det_D=np.array(dets), det_pred=r**2 * G.Delta0, angle_u_plus=np.array(ang_p), angle_u_minus=np.array(ang_m),
        ambiguous=amb, loglog_slope=slope, lambda_plus_Y0_limit=limit, lambda_plus_Y0_target=float(target),
        correction_slope=float(coef[0] / coef[1]) if coef[1] != 0 else float("nan"),
    )


# ---------------------------------------------------------------------------
# shape of the touching set


@dataclass(frozen=True)
class GammaSampleSpec:
    y1_values: tuple = tuple(np.concatenate((-np.geomspace(1e-2, 1e-3, 6), np.geomspace(1e-3, 1e-2, 6))))
    zbar_offsets: tuple = ()
    window: Optional[float] = None  # half-width of the touch window (default T/2)


@dataclass
class GammaFit:
    c: float
    residual: float
    c_neg: float
    c_pos: float
    inv_f1: float
    inv_2f1: float
    inv_2f1_wall: float
    samples: list = field(default_factory=list)  # (offset index, y1, x1 boundary)

    @property
    def printed_constant_discrepancy(self):
        """True when the brute-force c sides with 1/(2 f1) rather than 1/f1."""
        return abs(self.c - self.inv_2f1) < abs(self.c - self.inv_f1)

    def as_dict(self):
        return {
            "c": self.c,
            "residual": self.residual,
            "c_negative_y1": self.c_neg,
            "c_positive_y1": self.c_pos,
            "inv_f1_printed": self.inv_f1,
            "inv_2f1_derived": self.inv_2f1,
            "inv_2f1_at_wall": self.inv_2f1_wall,
            "printed_constant_discrepancy": self.printed_constant_discrepancy,
            "samples": [[i, y, x] for i, y, x in self.samples],
        }


def _arc_min_x1(arc):
    zs = arc.zs
    best = min(zs[0, 0], zs[-1, 0])
    ys = zs[:, 1]
    for i in range(len(arc.ts) - 1):
        if ys[i] == 0.0:
            best = min(best, zs[i, 0])
        elif ys[i] * ys[i + 1] < 0:
            a, b = sorted((arc.ts[i], arc.ts[i + 1]))
            tm = brentq(lambda t: arc.sample(t)[1], a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            best = min(best, arc.sample(tm)[0])
    return float(best)


def min_distance_in_window(sys, t_s, z, mu, window, opts):
    """min of x1 over [t_s - window, t_s + window] along the wall-free flow."""
    st = State(t_s, np.asarray(z, dtype=float))
    fwd, _ = flow_smooth(sys, st, t_s + window, mu, opts, detect=False)
    bwd, _ = flow_smooth(sys, st, t_s - window, mu, opts, detect=False)
    return min(_arc_min_x1(fwd), _arc_min_x1(bwd))


def gamma_boundary(sys, t_s, y1, zbar, mu, window, opts, f1_hint):
    g = lambda x1: min_distance_in_window(sys, t_s, np.concatenate(([x1, y1], zbar)), mu, window, opts)
    lo = 0.0
    hi = max(2.0 * y1**2 / max(abs(f1_hint), 1e-12), 1e-14)
    for _ in range(60):
        if g(hi) > 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise GrazingError(f"no touch/no-touch sign change for y1={y1}")
    if g(lo) > 0:
        raise GrazingError(f"no touch/no-touch sign change for y1={y1} (starting on the wall misses it)")
    return brentq(g, lo, hi, xtol=1e-18, rtol=8 * np.finfo(float).eps, maxiter=200)


def fit_gamma_surface(sys: SystemDefinition, theta, mu, sample_spec: GammaSampleSpec = GammaSampleSpec(),
                      opts: IntegratorOptions = DEFAULT_OPTIONS, phase=0.0, z_ref=None) -> GammaFit:
    """Sample the boundary x1 = gamma(y1, zbar) of the wall-touching set at time phase - theta.

    ``z_ref`` is the fixed point of the stroboscopic map (defaults to the
    origin); it supplies the base tangential state and the printed constant
    ``1/f1(-theta, z_ref)``.
    """
    t_s = phase - theta
    window = sample_spec.window if sample_spec.window is not None else 0.5 * sys.period
    if z_ref is None:
        z_ref = np.zeros(sys.dim)
    z_ref = np.asarray(z_ref, dtype=float)
    zbar0 = z_ref[2:]
    offsets = [np.zeros(sys.dim - 2)] + [np.asarray(o, dtype=float) for o in sample_spec.zbar_offsets]
    f1_ref = float(sys.accel(t_s, z_ref, mu)[0])
    f1_wall = float(sys.accel(t_s, np.concatenate(([0.0, 0.0], zbar0)), mu)[0])
    samples = []
    for k, off in enumerate(offsets):
        zbar = zbar0 + off
        for y1 in sample_spec.y1_values:
            x1 = gamma_boundary(sys, t_s, float(y1), zbar, mu, window, opts, f1_wall)
            samples.append((k, float(y1), float(x1)))
    y = np.array([s[1] for s in samples])
    x = np.array([s[2] for s in samples])
    c = float(np.sum(x * y**2) / np.sum(y**4))
    resid = float(np.sqrt(np.mean((x - c * y**2) ** 2)) / np.sqrt(np.mean(x**2)))
    neg, pos = y < 0, y > 0
    c_neg = float(np.sum(x[neg] * y[neg] ** 2) / np.sum(y[neg] ** 4)) if neg.any() else float("nan")
    c_pos = float(np.sum(x[pos] * y[pos] ** 2) / np.sum(y[pos] ** 4)) if pos.any() else float("nan")
    return GammaFit(c=c, residual=resid, c_neg=c_neg, c_pos=c_pos, inv_f1=1.0 / f1_ref, inv_2f1=0.5 / f1_ref,
                    inv_2f1_wall=0.5 / f1_wall, samples=samples)


# ---------------------------------------------------------------------------
# sampled robustness of hyperbolicity


@dataclass(frozen=True)
class LeevResult:
    n_total: int
    n_hyperbolic: int
    min_margin: float
    eps0: float
    mus: tuple

    def as_dict(self):
        return {"n_total": self.n_total, "n_hyperbolic": self.n_hyperbolic, "min_margin": self.min_margin,
                "eps0": self.eps0, "mu": list(self.mus)}


def leev_robustness(sys: SystemDefinition, family: OrbitFamily, G: GrazingMatrices, n_perturb=100, eps_rel=0.01,
                    n_orbits=3, seed=0, opts: IntegratorOptions = DEFAULT_OPTIONS) -> LeevResult:
    """Hyperbolicity of A' B_{mu,theta} for random A' with |A' - A| <= eps_rel |A| (spectral norm)."""
    rng = np.random.default_rng(seed)
    samples = sorted(pre_grazing_samples(family), key=lambda o: o.Y0)[:n_orbits]
    if not samples:
        raise GrazingError("no pre-grazing samples")
    Bs = [poincare_jacobian(sys, o.theta, o.z_star, o.mu, opts, phase=o.phase, split=True).B_part for o in samples]
    eps0 = eps_rel * float(np.linalg.norm(G.A, 2))
    d = G.A.shape[0]
    total = hyp = 0
    min_margin = float("inf")
    for _ in range(n_perturb):
        E = rng.standard_normal((d, d))
        E *= eps0 * rng.uniform() / np.linalg.norm(E, 2)
        Ap = G.A + E
        for B in Bs:
            m = hyperbolicity_margin(Ap @ B)
            total += 1
            hyp += m > 0
            min_margin = min(min_margin, m)
    return LeevResult(n_total=total, n_hyperbolic=hyp, min_margin=min_margin, eps0=eps0,
                      mus=tuple(o.mu for o in samples))


# ---------------------------------------------------------------------------
# report


@dataclass
class GrazingReport:
    grazing: dict
    matrices: GrazingMatrices
    conditions: ConditionReport
    asymptotics: Optional[SpectralAsymptotics]
    gamma: Optional[GammaFit]
    leev: Optional[LeevResult]
    theta: float
    theta0: float

    def as_dict(self):
        return {
            "grazing": self.grazing,
            "theta": self.theta,
            "theta0": self.theta0,
            "matrices": self.matrices.as_dict(),
            "conditions": self.conditions.as_dict(),
            "asymptotics": None if self.asymptotics is None else self.asymptotics.as_dict(),
            "gamma_surface": None if self.gamma is None else self.gamma.as_dict(),
            "leev": None if self.leev is None else self.leev.as_dict(),
        }


def grazing_report(sys: SystemDefinition, family: OrbitFamily, theta_seq=None, gamma_spec=None, gamma_theta=None,
                   leev_samples=100, seed=0, opts: IntegratorOptions = DEFAULT_OPTIONS) -> GrazingReport:
    rec = family.grazing
    if rec is None:
        raise GrazingError("no grazing detected")
    G = limit_matrix_A(sys, family, theta_seq, opts, strict=False)
    cond = check_conditions(G)
    asym = spectral_asymptotics(sys, family, G) if len(pre_grazing_samples(family)) >= 4 else None
    th0 = family.theta0()
    gth = gamma_theta if gamma_theta is not None else th0 / 16
    gamma = fit_gamma_surface(sys, gth, rec.mu_star, gamma_spec or GammaSampleSpec(), opts,
                              phase=rec.tau0_raw, z_ref=_state_at(sys, rec, -gth, opts))
    leev = leev_robustness(sys, family, G, n_perturb=leev_samples, seed=seed, opts=opts) if leev_samples else None
    return GrazingReport(grazing=rec.as_dict(), matrices=G, conditions=cond, asymptotics=asym, gamma=gamma, leev=leev,
                         theta=family.theta, theta0=th0)


def _state_at(sys, rec, dt, opts):
    """State of the grazing orbit at tau0 + dt (|dt| inside the contact-free window)."""
    arc, _ = flow_smooth(sys, State(rec.tau0_raw, rec.z_graze), rec.tau0_raw + dt, rec.mu_star, opts, detect=False)
    return arc.z1
