"""Numerical chaos surrogates near a grazing saddle: stable/unstable manifolds of
the fixed point, transversal homoclinic points, the largest Lyapunov exponent and
a census of periodic points of iterates of the stroboscopic map.

Nothing here certifies a horseshoe; the outputs are finite-precision evidence.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import root

from .errors import ConvergenceError, IntegratorError, ModelError, TransversalityError, VibroImpactError
from .integrator import DEFAULT_OPTIONS, IntegratorOptions, State, inverse_stroboscopic_map, simulate
from .model import SystemDefinition
from .variational import poincare_jacobian

log = logging.getLogger(__name__)

ESCAPE_RADIUS = 1e3
HYPERBOLIC_MARGIN = 1e-6


class ChaosError(VibroImpactError):
    pass


class NonHyperbolicError(ChaosError):
    pass


class OrbitEscape(ChaosError):
    pass


# ---------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class StroboscopicMap:
    """S_{mu,theta} of a system together with its inverse and Jacobian."""

    sys: SystemDefinition
    theta: float
    mu: float
    opts: IntegratorOptions = DEFAULT_OPTIONS
    phase: float = 0.0

    @property
    def dim(self):
        return self.sys.dim

    @property
    def period(self):
        return self.sys.period

    def _traj(self, z, periods=1):
        t0 = self.phase - self.theta
        return simulate(self.sys, State(t0, np.asarray(z, dtype=float)), t0 + periods * self.sys.period, self.mu,
                        self.opts)

    def forward(self, z):
        return self._traj(z).z_final

    def inverse(self, z):
        return inverse_stroboscopic_map(self.sys, self.theta, z, self.mu, self.opts, self.phase)

    def contact_count(self, z):
        return len(self._traj(z).impacts)

    def step(self, z, inverse=False):
        """(image, number of contacts on the way) for one forward or inverse period."""
        t0 = self.phase - self.theta + (self.sys.period if inverse else 0.0)
        t1 = t0 - self.sys.period if inverse else t0 + self.sys.period
        traj = simulate(self.sys, State(t0, np.asarray(z, dtype=float)), t1, self.mu, self.opts)
        return traj.z_final, len(traj.impacts)

    def iterate(self, z, m):
        for _ in range(m):
            z = self.forward(z)
        return z

    def jacobian(self, z, periods=1):
        """(S^periods(z), D); finite differences when an exact Jacobian is unavailable."""
        try:
            mj = poincare_jacobian(self.sys, self.theta, z, self.mu, self.opts, phase=self.phase, periods=periods)
            return mj.z_end, mj.D, False
        except (TransversalityError, IntegratorError):
            return self.iterate(z, periods), fd_jacobian(lambda q: self.iterate(q, periods), z), True


@dataclass(frozen=True)
class LinearMap:
    """z -> c + D (z - c); a stub with exactly known manifolds."""

    D: np.ndarray
    center: np.ndarray = None
    period: float = 1.0

    @property
    def dim(self):
        return self.D.shape[0]

    def _c(self):
        return np.zeros(self.dim) if self.center is None else np.asarray(self.center, dtype=float)

    def forward(self, z):
        c = self._c()
        return c + self.D @ (np.asarray(z, dtype=float) - c)

    def inverse(self, z):
        c = self._c()
        return c + np.linalg.solve(self.D, np.asarray(z, dtype=float) - c)

    def contact_count(self, z):
        return 0

    def step(self, z, inverse=False):
        return (self.inverse(z) if inverse else self.forward(z)), 0

    def iterate(self, z, m):
        for _ in range(m):
            z = self.forward(z)
        return z

    def jacobian(self, z, periods=1):
        return self.iterate(z, periods), np.linalg.matrix_power(self.D, periods), False


def fd_jacobian(fun, z, h=1e-7):
    """Central differences; one-sided (second order) in x1 when the state sits on the wall."""
    z = np.asarray(z, dtype=float)
    cols = []
    f0 = None
    for j in range(len(z)):
        e = np.zeros_like(z)
        e[j] = h * max(1.0, abs(z[j]))
        if j == 0 and z[0] - e[0] < 0:
            f0 = fun(z) if f0 is None else f0
            cols.append((-3 * f0 + 4 * fun(z + e) - fun(z + 2 * e)) / (2 * e[j]))
        else:
            cols.append((fun(z + e) - fun(z - e)) / (2 * e[j]))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# local manifolds


@dataclass(frozen=True)
class LocalManifolds:
    z_star: np.ndarray
    lambda_u: float
    lambda_s: float
    u_plus: np.ndarray
    u_minus: np.ndarray
    seed_delta: float
    residual_u: float
    residual_s: float
    margin: float


def default_seed_delta(z_star):
    return 1e-5 * float(np.linalg.norm(z_star)) + 1e-8


def _dominant_pair(D):
    w, V = np.linalg.eig(D)
    mags = np.abs(w)
    iu, is_ = int(np.argmax(mags)), int(np.argmin(mags))
    margin = float(np.min(np.abs(mags - 1.0)))
    if margin <= HYPERBOLIC_MARGIN or mags[iu] <= 1 or mags[is_] >= 1:
        raise NonHyperbolicError(f"fixed point is not a saddle (|eigenvalues| = {np.sort(mags).tolist()})")
    if abs(w[iu].imag) > 0 or abs(w[is_].imag) > 0:
        raise NonHyperbolicError("dominant eigenvalues are complex; no 1-D manifold direction")
    vu, vs = np.real(V[:, iu]), np.real(V[:, is_])
    vu /= np.linalg.norm(vu)
    vs /= np.linalg.norm(vs)
    # fixed orientation so reruns are identical
    vu *= np.sign(vu[np.argmax(np.abs(vu))])
    vs *= np.sign(vs[np.argmax(np.abs(vs))])
    return float(w[iu].real), float(w[is_].real), vu, vs, margin


def lambda_residuals(smap, z_star, lu, ls, vu, vs, delta):
    ru = np.linalg.norm(smap.forward(z_star + delta * vu) - z_star - lu * delta * vu)
    rs = np.linalg.norm(smap.inverse(z_star + delta * vs) - z_star - delta * vs / ls)
    return float(ru), float(rs)


def local_manifolds(smap, z_star, D=None, seed_delta=None, max_shrink=4) -> LocalManifolds:
    """Eigen-split of D at the saddle z* and lambda-consistency check of the seed segments."""
    z_star = np.asarray(z_star, dtype=float)
    if D is None:
        _, D, _ = smap.jacobian(z_star)
    lu, ls, vu, vs, margin = _dominant_pair(D)
    delta = default_seed_delta(z_star) if seed_delta is None else seed_delta
    for _ in range(max_shrink + 1):
        try:
            ru, rs = lambda_residuals(smap, z_star, lu, ls, vu, vs, delta)
        except VibroImpactError:
            ru = rs = float("inf")
        if ru <= 0.1 * abs(lu) * delta and rs <= 0.1 * delta / abs(ls):
            return LocalManifolds(z_star=z_star, lambda_u=lu, lambda_s=ls, u_plus=vu, u_minus=vs, seed_delta=delta,
                                  residual_u=ru, residual_s=rs, margin=margin)
        delta *= 0.25
    raise ChaosError(f"local manifold validation failed down to seed_delta={delta * 4:.3e}")


# ---------------------------------------------------------------------------
# global manifolds


@dataclass
class ManifoldCurve:
    """Branches of a 1-D (un)stable manifold as ordered polylines.

    Each point remembers its seed parameter ``s`` (signed offset along the
    eigenvector) and its depth (number of map applications), so it can be
    recomputed exactly.
    """

    kind: str
    z_star: np.ndarray
    direction: np.ndarray
    seed_delta: float
    max_gap: float
    branches: list  # list of dicts with arrays: points, s, depth, corner
    truncated: bool = False
    multiplier: float = float("nan")  # eigenvalue of the generating step along ``direction``

    @property
    def points(self):
        return np.vstack([b["points"] for b in self.branches]) if self.branches else np.zeros((0, len(self.z_star)))

    def arclength(self, branch):
        p = self.branches[branch]["points"]
        return np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))))

    @property
    def depth(self):
        return max((int(b["depth"].max()) for b in self.branches if len(b["depth"])), default=0)

    def segments(self):
        for bi, b in enumerate(self.branches):
            p = b["points"]
            for i in range(len(p) - 1):
                yield bi, i, p[i], p[i + 1]

    def write_csv(self, path):
        fmt = lambda v: format(float(v), ".17g")
        d = len(self.z_star)
        names = [f"{c}{k // 2 + 1}" for k, c in zip(range(d), "xy" * d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["branch", "arclength"] + names + ["seed_s", "depth", "corner"])
            for bi, b in enumerate(self.branches):
                arc = self.arclength(bi)
                for i, p in enumerate(b["points"]):
                    w.writerow([bi, fmt(arc[i])] + [fmt(v) for v in p]
                               + [fmt(b["s"][i]), int(b["depth"][i]), int(bool(b["corner"][i]))])


def _chain(step, s, z0, k, cache):
    """(point, contacts of the last step) after k steps from seed parameter s, cached per seed."""
    pts = cache.get(s)
    if pts is None:
        pts = [(z0, -1)]
        cache[s] = pts
    while len(pts) <= k:
        if pts[-1] is None:
            return None
        try:
            nxt, cnt = step(pts[-1][0])
            if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > ESCAPE_RADIUS:
                pts.append(None)
                continue
        except VibroImpactError:
            pts.append(None)
            continue
        pts.append((nxt, cnt))
    return pts[k]


def grow_manifold(smap, local: LocalManifolds, kind: str, depth: int, max_gap=0.02, n_seed=12, min_ds_rel=1e-9,
                  max_points=20000, max_length=None) -> ManifoldCurve:
    """Grow W^u (kind='unstable', forward map) or W^s (kind='stable', inverse map).

    The fundamental domains ``+-[delta, |lambda| delta]`` on the eigenline are
    carried ``0..depth`` times; images at depth k land on side
    ``sign * sign(lambda)^k`` at virtual distance ``|lambda|^k s``, which
    orders each branch. Gaps above ``max_gap`` are filled by bisecting the
    seed parameter. A branch stops once its arclength exceeds ``max_length``.
    A point is flagged as a corner when the number of contacts in the map
    application that produced it differs from its neighbour's.
    """
    if kind == "unstable":
        lam, vec, inverse = local.lambda_u, local.u_plus, False
    elif kind == "stable":
        lam, vec, inverse = 1.0 / local.lambda_s, local.u_minus, True
    else:
        raise ValueError("kind must be 'unstable' or 'stable'")
    step = lambda z: smap.step(z, inverse=inverse)
    z_star, delta = local.z_star, local.seed_delta
    ratio = abs(lam)
    flip = -1 if lam < 0 else 1
    cache = {}
    parts = {1: [], -1: []}
    length = {1: 0.0, -1: 0.0}
    last = {1: z_star, -1: z_star}
    done = {1: False, -1: False}
    truncated = False
    n_added = 0

    for k in range(depth + 1):
        for sign in (1, -1):
            side = sign * flip**k
            if done[side]:
                continue
            base = sign * delta * np.geomspace(1.0, ratio, n_seed)
            ss = [float(v) for v in base]
            pts = [_chain(step, s, z_star + s * vec, k, cache) for s in ss]
            # the last seed of a domain coincides with the first of the next depth
            n_keep = len(ss) - 1 if k < depth else len(ss)
            i = 0
            while i < n_keep:
                p = pts[i]
                if p is None:
                    truncated = True
                    i += 1
                    continue
                if i + 1 < len(ss) and pts[i + 1] is not None and n_added < max_points \
                        and np.linalg.norm(pts[i + 1][0] - p[0]) > max_gap and abs(ss[i + 1] - ss[i]) > min_ds_rel * delta:
                    sm = 0.5 * (ss[i] + ss[i + 1])
                    ss.insert(i + 1, sm)
                    pts.insert(i + 1, _chain(step, sm, z_star + sm * vec, k, cache))
                    n_keep += 1
                    n_added += 1
                    continue
                length[side] += float(np.linalg.norm(p[0] - last[side]))
                last[side] = p[0]
                parts[side].append((ss[i], k, p[0], p[1]))
                if max_length is not None and length[side] > max_length:
                    done[side] = True
                    break
                i += 1
            if n_added >= max_points:
                truncated = True

    branches = []
    for side in (1, -1):
        part = parts[side]
        if not part:
            continue
        counts = np.array([e[3] for e in part], dtype=int)
        corner = np.zeros(len(part), dtype=bool)
        corner[1:] = (counts[1:] >= 0) & (counts[:-1] >= 0) & (counts[1:] != counts[:-1])
        branches.append(dict(points=np.array([e[2] for e in part]), s=np.array([e[0] for e in part]),
                             depth=np.array([e[1] for e in part], dtype=int), corner=corner, contacts=counts,
                             side=side, capped=done[side]))
    return ManifoldCurve(kind=kind, z_star=z_star, direction=vec, seed_delta=delta, max_gap=max_gap,
                         branches=branches, truncated=truncated, multiplier=lam)


# ---------------------------------------------------------------------------
# homoclinic points


@dataclass
class HomoclinicPoint:
    """A crossing of W^u and W^s plus the validation of its orbit.

    ``entry`` is the forward iterate of ``point`` on the local stable segment
    and ``exit`` the backward iterate on the local unstable segment; both are
    points of the same homoclinic orbit. After refinement they are taken
    from the solved seed parameters rather than by iterating ``point``,
    since iterating across ``depth_s`` steps amplifies round-off by
    ``|lambda_u|^depth_s``. ``forward_distances`` are
    ``|S^j(entry) - z*|`` and ``backward_distances`` are ``|S^-j(exit) - z*|``
    for ``j = 1..n``.
    """

    point: np.ndarray
    angle: float
    u_ref: tuple  # (branch, segment index, fraction)
    s_ref: tuple
    depth_u: int = 0
    depth_s: int = 0
    refined: bool = False
    refine_residual: float = float("nan")
    entry: Optional[np.ndarray] = None
    exit: Optional[np.ndarray] = None
    forward_distances: list = field(default_factory=list)
    backward_distances: list = field(default_factory=list)
    forward_monotone: bool = False
    backward_monotone: Optional[bool] = None
    partial: bool = False

    @property
    def transit(self):
        return self.depth_u + self.depth_s

    def as_dict(self):
        vec = lambda v: None if v is None else np.asarray(v).tolist()
        return {
            "point": vec(self.point),
            "angle": self.angle,
            "refined": self.refined,
            "refine_residual": self.refine_residual,
            "depth_u": self.depth_u,
            "depth_s": self.depth_s,
            "entry": vec(self.entry),
            "exit": vec(self.exit),
            "forward_distances": self.forward_distances,
            "forward_monotone": self.forward_monotone,
            "backward_distances": self.backward_distances,
            "backward_monotone": self.backward_monotone,
            "partial_certificate": self.partial,
        }


def _project(curve_pts, z_star, basis):
    return (curve_pts - z_star) @ basis.T


def polyline_intersections(P, Q):
    """All proper intersections between consecutive-point polylines P and Q (arrays (k,2)).

    Returns list of (i, j, a, b, angle): segment P[i]P[i+1] at fraction a meets
    Q[j]Q[j+1] at fraction b.
    """
    out = []
    if len(P) < 2 or len(Q) < 2:
        return out
    q0, q1 = Q[:-1], Q[1:]
    dq = q1 - q0
    qmin, qmax = np.minimum(q0, q1), np.maximum(q0, q1)
    for i in range(len(P) - 1):
        p0, p1 = P[i], P[i + 1]
        lo, hi = np.minimum(p0, p1), np.maximum(p0, p1)
        cand = np.nonzero(np.all(qmax >= lo, axis=1) & np.all(qmin <= hi, axis=1))[0]
        if cand.size == 0:
            continue
        dp = p1 - p0
        d = dq[cand]
        den = dp[0] * d[:, 1] - dp[1] * d[:, 0]
        ok = np.abs(den) > 1e-300
        if not ok.any():
            continue
        w = q0[cand] - p0
        a = (w[:, 0] * d[:, 1] - w[:, 1] * d[:, 0]) / np.where(ok, den, 1.0)
        b = (w[:, 0] * dp[1] - w[:, 1] * dp[0]) / np.where(ok, den, 1.0)
        hit = ok & (a >= 0) & (a < 1) & (b >= 0) & (b < 1)
        for j, aa, bb, dj in zip(cand[hit], a[hit], b[hit], d[hit]):
            c = abs(np.dot(dp, dj)) / (np.linalg.norm(dp) * np.linalg.norm(dj))
            out.append((i, int(j), float(aa), float(bb), float(math.acos(min(1.0, c)))))
    return out


def _seed_at(W, branch, i, a):
    """(depth, seed) of the polyline point at fraction a of segment i, both ends taken to the lower depth."""
    B = W.branches[branch]
    k0, k1 = int(B["depth"][i]), int(B["depth"][i + 1])
    k = min(k0, k1)
    s0 = B["s"][i] * W.multiplier ** (k0 - k)
    s1 = B["s"][i + 1] * W.multiplier ** (k1 - k)
    return k, s0 + a * (s1 - s0), s1 - s0


def _walk(W, k, s, step):
    z = W.z_star + s * W.direction
    for _ in range(k):
        z = step(z)
    return z


def _refine(smap, Wu, Ws, h: HomoclinicPoint, tol):
    """Solve S^ku(seed_u) = S^-ks(seed_s) for the two seed parameters (n = 1)."""
    ku, su0, du = _seed_at(Wu, *h.u_ref)
    ks, ss0, ds = _seed_at(Ws, *h.s_ref)

    def F(v):
        return _walk(Wu, ku, su0 + v[0] * du, smap.forward) - _walk(Ws, ks, ss0 + v[1] * ds, smap.inverse)

    try:
        sol = root(F, np.zeros(2), method="hybr", options=dict(xtol=1e-14, eps=1e-6))
        if abs(sol.x[0]) > 2 or abs(sol.x[1]) > 2:
            return None
        res = float(np.linalg.norm(F(sol.x)))
    except VibroImpactError:
        return None
    if not res <= tol:
        return None
    s_u, s_s = su0 + sol.x[0] * du, ss0 + sol.x[1] * ds
    return dict(point=_walk(Ws, ks, s_s, smap.inverse), depth_u=ku, depth_s=ks, residual=res,
                entry=Ws.z_star + s_s * Ws.direction, exit=Wu.z_star + s_u * Wu.direction)


def _distances(step, p, z_star, n):
    out = []
    z = p
    for _ in range(n):
        try:
            z = step(z)
        except VibroImpactError:
            out.append(float("nan"))
            break
        out.append(float(np.linalg.norm(z - z_star)))
    return out


def _monotone(ds, d0):
    seq = [d0] + ds
    return bool(np.all(np.isfinite(seq))) and all(seq[i + 1] < seq[i] for i in range(len(seq) - 1))


def _iterate_safe(step, z, k):
    try:
        for _ in range(k):
            z = step(z)
        return z
    except VibroImpactError:
        return None


def find_homoclinic(Ws: ManifoldCurve, Wu: ManifoldCurve, tol=1e-9, angle_min=1e-3, smap=None, refine=True,
                    n_validate=5):
    """Transversal intersections of the grown stable and unstable curves.

    For n = 1 the curves are planar polylines. For n > 1 they are projected on
    the plane of (u+, u-) through z*, which is only a partial certificate.
    Crossings within ``10 * seed_delta`` of z* or at angles below
    ``angle_min`` are discarded. With a map, each crossing is refined by a 2-D
    root solve in the seed parameters (n = 1, residual <= tol) and its orbit
    is validated: ``n_validate`` forward iterates from the entry point and
    backward iterates from the exit point must approach z* monotonically.
    """
    z_star = Wu.z_star
    d = len(z_star)
    if d == 2:
        basis = np.eye(2)
    else:
        q, _ = np.linalg.qr(np.column_stack((Wu.direction, Ws.direction)))
        basis = q.T
    excl = 10 * max(Wu.seed_delta, Ws.seed_delta)
    found = []
    for bu, U in enumerate(Wu.branches):
        P = _project(U["points"], z_star, basis)
        for bs, S in enumerate(Ws.branches):
            Q = _project(S["points"], z_star, basis)
            for i, j, a, b, ang in polyline_intersections(P, Q):
                if ang < angle_min:
                    continue
                p = U["points"][i] + a * (U["points"][i + 1] - U["points"][i])
                if np.linalg.norm(p - z_star) <= excl:
                    continue
                found.append(HomoclinicPoint(point=p, angle=ang, u_ref=(bu, i, a), s_ref=(bs, j, b),
                                             depth_u=int(min(U["depth"][i], U["depth"][i + 1])),
                                             depth_s=int(min(S["depth"][j], S["depth"][j + 1])), partial=d > 2))
    if smap is not None:
        for h in found:
            if refine and d == 2:
                res = _refine(smap, Wu, Ws, h, tol)
                if res is not None:
                    h.point, h.depth_u, h.depth_s = res["point"], res["depth_u"], res["depth_s"]
                    h.entry, h.exit, h.refine_residual = res["entry"], res["exit"], res["residual"]
                    h.refined = True
            if not h.refined:
                h.entry = _iterate_safe(smap.forward, h.point, h.depth_s)
                h.exit = _iterate_safe(smap.inverse, h.point, h.depth_u)
            if h.entry is not None:
                h.forward_distances = _distances(smap.forward, h.entry, z_star, n_validate)
                h.forward_monotone = _monotone(h.forward_distances, float(np.linalg.norm(h.entry - z_star)))
            if h.exit is not None:
                h.backward_distances = _distances(smap.inverse, h.exit, z_star, n_validate)
                h.backward_monotone = _monotone(h.backward_distances, float(np.linalg.norm(h.exit - z_star)))
    found.sort(key=lambda h: (h.transit, tuple(np.round(h.point, 9))))
    return found


# ---------------------------------------------------------------------------
# Lyapunov exponent


@dataclass(frozen=True)
class LyapunovEstimate:
    mean: float
    stderr: float
    n_iter: int
    burn_in: int
    n_blocks: int
    fallback_steps: int
    sticking_fraction: float
    block_means: tuple

    @property
    def band(self):
        return 3.0 * self.stderr

    def as_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "band_3sigma": self.band,
            "n_iter": self.n_iter,
            "burn_in": self.burn_in,
            "n_blocks": self.n_blocks,
            "fallback_steps": self.fallback_steps,
            "sticking_fraction": self.sticking_fraction,
            "sticking_dominated": self.sticking_fraction > 0.5,
        }


def lyapunov_exponent(smap, z0, n_iter=400, burn_in=100, n_blocks=10, v0=None) -> LyapunovEstimate:
    """Largest exponent (per unit time) from tangent propagation with renormalisation every period.

    Periods whose exact Jacobian is unavailable (near-grazing contact,
    sticking) use a central finite-difference Jacobian of the one-period map.
    """
    z = np.asarray(z0, dtype=float)
    for _ in range(burn_in):
        z = smap.forward(z)
        if np.linalg.norm(z) > ESCAPE_RADIUS:
            raise OrbitEscape("orbit escaped during burn-in")
    v = np.ones(smap.dim) if v0 is None else np.asarray(v0, dtype=float)
    v = v / np.linalg.norm(v)
    logs = np.empty(n_iter)
    fallback = 0
    sticking = 0
    T = smap.period
    for k in range(n_iter):
        z_new, D, used_fd = smap.jacobian(z)
        fallback += used_fd
        if used_fd and isinstance(smap, StroboscopicMap):
            sticking += bool(smap._traj(z).sticking)
        v = D @ v
        nv = float(np.linalg.norm(v))
        if nv == 0 or not np.isfinite(nv):
            logs[k] = math.log(np.finfo(float).tiny)
            v = np.ones(smap.dim) / math.sqrt(smap.dim)
        else:
            logs[k] = math.log(nv)
            v /= nv
        z = z_new
        if np.linalg.norm(z) > ESCAPE_RADIUS:
            raise OrbitEscape(f"orbit escaped after {k} iterates")
    per_t = logs / T
    usable = n_iter - n_iter % n_blocks
    blocks = per_t[:usable].reshape(n_blocks, -1).mean(axis=1)
    stderr = float(blocks.std(ddof=1) / math.sqrt(n_blocks)) if n_blocks > 1 else float("nan")
    return LyapunovEstimate(mean=float(per_t.mean()), stderr=stderr, n_iter=n_iter, burn_in=burn_in,
                            n_blocks=n_blocks, fallback_steps=fallback, sticking_fraction=sticking / n_iter,
                            block_means=tuple(float(b) for b in blocks))


# ---------------------------------------------------------------------------
# periodic points


@dataclass
class PeriodicPoint:
    point: np.ndarray
    m: int
    minimal_period: int
    residual: float
    eigenvalues: np.ndarray
    stability: str
    orbit: np.ndarray

    def as_dict(self):
        return {
            "point": self.point.tolist(),
            "m": self.m,
            "minimal_period": self.minimal_period,
            "residual": self.residual,
            "eigenvalue_moduli": np.abs(self.eigenvalues).tolist(),
            "stability": self.stability,
        }


def _classify(ev):
    mags = np.abs(ev)
    if np.all(mags < 1):
        return "stable"
    if np.all(mags > 1):
        return "unstable"
    return "saddle"


def _newton_periodic(smap, z, m, tol=1e-10, max_iter=15, max_halvings=5):
    """Damped Newton on S^m(z) - z; each trial point is evaluated once, with its Jacobian."""
    z = np.asarray(z, dtype=float)
    I = np.eye(len(z))
    zm, D, _ = smap.jacobian(z, periods=m)
    F = zm - z
    res = float(np.linalg.norm(F))
    for _ in range(max_iter):
        if res <= tol:
            return z, D, res
        dz = np.linalg.solve(D - I, -F)
        lam = 1.0
        for _ in range(max_halvings + 1):
            zt = z + lam * dz
            if zt[0] >= 0 and np.linalg.norm(zt) < ESCAPE_RADIUS:
                try:
                    zm_t, D_t, _ = smap.jacobian(zt, periods=m)
                    F_t = zm_t - zt
                    if np.linalg.norm(F_t) < res:
                        break
                except VibroImpactError:
                    pass
            lam *= 0.5
        else:
            break
        z, D, F = zt, D_t, F_t
        res = float(np.linalg.norm(F))
    if res <= tol:
        return z, D, res
    raise ConvergenceError("periodic-point Newton failed", iterate=z, residual=res)


def _seed_task(args):
    smap, seed, m, tol = args
    try:
        z, D, res = _newton_periodic(smap, seed, m, tol)
    except (VibroImpactError, np.linalg.LinAlgError, FloatingPointError, ValueError):
        return None
    return z, D, res


def find_periodic_points(smap, m, seeds, tol=1e-10, dedupe=1e-6, residual_max=1e-8, jobs=1):
    """Newton on S^m(z) - z from every seed; distinct orbits with their stability.

    Returns ``(orbits, n_failed)`` where each orbit is represented once (by
    its lexicographically smallest point). Seeds may run in parallel; the
    merge is ordered by seed index so results do not depend on ``jobs``.
    """
    tasks = [(smap, np.asarray(s, dtype=float), m, tol) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_seed_task, tasks))
    else:
        results = [_seed_task(t) for t in tasks]
    orbits, failed = [], 0
    for r in results:
        if r is None:
            failed += 1
            continue
        z, D, res = r
        fresh = float(np.linalg.norm(smap.iterate(z, m) - z))
        if fresh > residual_max:
            failed += 1
            continue
        if any(np.min(np.linalg.norm(o.orbit - z, axis=1)) <= dedupe for o in orbits):
            continue
        pts = [z]
        for _ in range(m - 1):
            pts.append(smap.forward(pts[-1]))
        pts = np.array(pts)
        minimal = m
        for k in range(1, m):
            if m % k == 0 and np.linalg.norm(pts[k] - z) <= dedupe:
                minimal = k
                break
        rep = pts[np.lexsort(pts.T[::-1])][0]
        ev = np.linalg.eigvals(D)
        orbits.append(PeriodicPoint(point=rep, m=m, minimal_period=minimal, residual=fresh, eigenvalues=ev,
                                    stability=_classify(ev), orbit=pts[:minimal]))
    orbits.sort(key=lambda o: (o.minimal_period, tuple(np.round(o.point, 10))))
    return orbits, failed


def seed_grid(center, half_width, n_per_axis):
    center = np.asarray(center, dtype=float)
    axes = [np.linspace(c - half_width, c + half_width, n_per_axis) for c in center]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(center), -1).T
    return grid[grid[:, 0] >= 0]


# ---------------------------------------------------------------------------
# report


@dataclass
class ChaosReport:
    mu: float
    theta: float
    z_star: np.ndarray
    local: Optional[LocalManifolds]
    homoclinic_points: list
    lyapunov: Optional[LyapunovEstimate]
    periodic_points: list
    m: Optional[int]
    notes: list = field(default_factory=list)
    manifolds: tuple = ()

    def as_dict(self):
        return {
            "mu": self.mu,
            "theta": self.theta,
            "z_star": self.z_star.tolist(),
            "eigen": None if self.local is None else {
                "lambda_u": self.local.lambda_u, "lambda_s": self.local.lambda_s,
                "u_plus": self.local.u_plus.tolist(), "u_minus": self.local.u_minus.tolist(),
                "seed_delta": self.local.seed_delta, "margin": self.local.margin,
            },
            "homoclinic_points": [h.as_dict() for h in self.homoclinic_points],
            "lyapunov": None if self.lyapunov is None else self.lyapunov.as_dict(),
            "periodic_points": [p.as_dict() for p in self.periodic_points],
            "m": self.m,
            "disclaimer": DISCLAIMER,
            "notes": list(self.notes),
        }

    @property
    def saddle_orbits(self):
        """Saddle periodic orbits other than the fixed point itself."""
        return [p for p in self.periodic_points
                if p.stability == "saddle" and not (p.minimal_period == 1 and np.linalg.norm(p.point - self.z_star) <= 1e-6)]


DISCLAIMER = ("surrogate evidence only: the invariant set, density of periodic points and transitivity "
              "are not certified")


@dataclass(frozen=True)
class ChaosOptions:
    seed_delta: Optional[float] = None
    depth: int = 16
    max_gap: float = 0.1
    max_length: float = 3.0
    angle_min: float = 1e-3
    refine_tol: float = 1e-9
    n_validate: int = 5
    lyap_iter: int = 400
    lyap_burn_in: int = 100
    lyap_blocks: int = 10
    lyap_offset: float = 1e-2
    m_max: int = 6
    n_saddles: int = 2
    seed_grid_half_width: float = 0.3
    seed_grid_n: int = 3
    n_orbit_seeds: int = 2
    jobs: int = 1


def _census_seeds(smap, z_star, homoclinic, copts: ChaosOptions):
    seeds = []
    for h in homoclinic:
        z = h.point
        seeds.append(z)
        for _ in range(copts.n_orbit_seeds - 1):
            z = _iterate_safe(smap.forward, z, 1)
            if z is None:
                break
            seeds.append(z)
    seeds.extend(seed_grid(z_star, copts.seed_grid_half_width, copts.seed_grid_n))
    return [s for s in seeds if s[0] >= 0]


def chaos_report(smap: StroboscopicMap, z_star, D=None, copts: ChaosOptions = ChaosOptions()) -> ChaosReport:
    """Manifolds, homoclinic points, Lyapunov exponent and a periodic-point census at one parameter.

    The census scans ``m = 1..m_max`` and stops once ``n_saddles`` saddle
    orbits other than z* are known; ``m`` in the report is the smallest
    iterate at which such an orbit was found.
    """
    z_star = np.asarray(z_star, dtype=float)
    notes = []
    local, homoclinic, manifolds = None, [], ()
    try:
        local = local_manifolds(smap, z_star, D, copts.seed_delta)
    except ChaosError as exc:
        notes.append(f"no manifolds: {exc}")
    if local is not None:
        Wu = grow_manifold(smap, local, "unstable", copts.depth, copts.max_gap, max_length=copts.max_length)
        Ws = grow_manifold(smap, local, "stable", copts.depth, copts.max_gap, max_length=copts.max_length)
        manifolds = (Wu, Ws)
        homoclinic = find_homoclinic(Ws, Wu, copts.refine_tol, copts.angle_min, smap, n_validate=copts.n_validate)
        if smap.dim > 2:
            notes.append("n > 1: manifolds are 1-D curves along the dominant directions; homoclinic test is partial")
    lyap = None
    try:
        lyap = lyapunov_exponent(smap, z_star + copts.lyap_offset * np.eye(smap.dim)[0], copts.lyap_iter,
                                 copts.lyap_burn_in, copts.lyap_blocks)
    except (OrbitEscape, VibroImpactError) as exc:
        notes.append(f"no Lyapunov estimate: {exc}")
    periodic, m_found = [], None
    if local is not None:
        seeds = _census_seeds(smap, z_star, homoclinic, copts)
        known = []
        for m in range(1, copts.m_max + 1):
            orbits, _ = find_periodic_points(smap, m, seeds, jobs=copts.jobs)
            for o in orbits:
                if not any(o.minimal_period == k.minimal_period and np.min(np.linalg.norm(k.orbit - o.point, axis=1)) <= 1e-6
                           for k in known):
                    known.append(o)
            report = ChaosReport(mu=smap.mu, theta=smap.theta, z_star=z_star, local=local, homoclinic_points=[],
                                 lyapunov=None, periodic_points=known, m=None)
            if report.saddle_orbits and m_found is None:
                m_found = m
            if len(report.saddle_orbits) >= copts.n_saddles:
                break
        periodic = known
    return ChaosReport(mu=smap.mu, theta=smap.theta, z_star=z_star, local=local, homoclinic_points=homoclinic,
                       lyapunov=lyap, periodic_points=periodic, m=m_found, notes=notes, manifolds=manifolds)
