"""Event-driven integration of the hybrid system.

Smooth arcs are integrated with the Dormand-Prince 5(4) pair. Wall contacts
are bracketed from step nodes (sign change of x1, or a sign change of the
normal velocity with a negative interior minimum) and then localised by
Brent's method on the RK solution re-stepped from the last node, so the
event state carries the full order of the method. The same re-stepping is
the dense output; a cubic Hermite interpolant is kept for cheap bracketing.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DegenerateGrazing, IntegratorError, ModelError, StepSizeUnderflow
from .model import (
    ImpactEvent,
    State,
    SystemDefinition,
    apply_impact,
    field_at,
    field_jacobian,
    invert_impact,
    release_test,
    sticking_vector_field,
)

log = logging.getLogger(__name__)

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B5 = _A[6].copy()
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_TIME_EPS = 1e-13


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    tol_event: float = 1e-10
    graze_tol: float = 1e-6
    max_impacts: int = 50
    v_stick: float = 1e-5
    max_step: Optional[float] = None
    chatter_window: float = 1.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "tol_event", "graze_tol", "v_stick", "chatter_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_impacts < 1:
            raise ValueError("max_impacts must be >= 1")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.v_stick < self.graze_tol:
            raise ValueError("v_stick must be >= graze_tol")

    def step_cap(self, sys: SystemDefinition) -> float:
        cap = sys.period / 32.0
        return cap if self.max_step is None else min(cap, self.max_step)


DEFAULT_OPTIONS = IntegratorOptions()


class _Stepper:
    """One RK pair bound to a system, a parameter and (optionally) variational mode."""

    def __init__(self, sys: SystemDefinition, mu, opts: IntegratorOptions, variational=False, reduced=False):
        self.sys = sys
        self.mu = mu
        self.opts = opts
        self.variational = variational
        self.reduced = reduced
        self.d = sys.dim - 2 if reduced else sys.dim

    def fun(self, t, w):
        sys, mu, d = self.sys, self.mu, self.d
        if self.reduced:
            return sticking_vector_field(sys, t, w, mu)
        z = w[:d]
        f = field_at(sys, t, z, mu)
        if not self.variational:
            return f
        J = field_jacobian(sys, t, z, mu)
        phi = w[d:].reshape(d, d)
        return np.concatenate((f, (J @ phi).ravel()))

    def stages(self, t, w, k1, h):
        K = np.empty((7, w.size))
        K[0] = k1
        for i in range(1, 7):
            K[i] = self.fun(t + _C[i] * h, w + h * (_A[i, :i] @ K[:i]))
        return K

    def step(self, t, w, k1, h):
        K = self.stages(t, w, k1, h)
        w_new = w + h * (_B5[:6] @ K[:6])
        err = h * (_E @ K)
        return w_new, K[6], err

    def substep(self, t, w, k1, s):
        """State at t + s obtained by a single RK step of size s (dense output)."""
        if s == 0.0:
            return w.copy()
        K = np.empty((6, w.size))
        K[0] = k1
        for i in range(1, 6):
            K[i] = self.fun(t + _C[i] * s, w + s * (_A[i, :i] @ K[:i]))
        w_new = w + s * (_B5[:6] @ K)
        if not np.all(np.isfinite(w_new)):
            raise IntegratorError("non-finite state", t=t + s, z=w_new[: self.d])
        return w_new

    def error_norm(self, w, w_new, err):
        d = self.d
        if d == 0:
            return 0.0
        scale = self.opts.abs_tol + self.opts.rel_tol * np.maximum(np.abs(w[:d]), np.abs(w_new[:d]))
        return math.sqrt(float(np.mean((err[:d] / scale) ** 2)))


@dataclass
class Arc:
    """Smooth piece of a trajectory, with step nodes for dense output."""

    sys: SystemDefinition
    mu: float
    ts: np.ndarray
    ws: np.ndarray
    ks: np.ndarray
    variational: bool = False
    end_reason: str = "t_end"
    opts: IntegratorOptions = DEFAULT_OPTIONS

    @property
    def t0(self):
        return float(self.ts[0])

    @property
    def t1(self):
        return float(self.ts[-1])

    @property
    def direction(self):
        return 1.0 if self.t1 >= self.t0 else -1.0

    @property
    def zs(self):
        return self.ws[:, : self.sys.dim]

    @property
    def z0(self):
        return self.zs[0].copy()

    @property
    def z1(self):
        return self.zs[-1].copy()

    @property
    def jac(self):
        if not self.variational:
            raise ValueError("arc was integrated without variational equations")
        d = self.sys.dim
        return self.ws[-1, d:].reshape(d, d).copy()

    def _node(self, t):
        if self.direction > 0:
            i = int(np.searchsorted(self.ts, t, side="right")) - 1
        else:
            i = int(np.searchsorted(-self.ts, -t, side="right")) - 1
        return min(max(i, 0), len(self.ts) - 1)

    def _stepper(self):
        return _Stepper(self.sys, self.mu, self.opts, self.variational)

    def sample(self, t) -> np.ndarray:
        """Dense output by re-stepping from the preceding node."""
        i = self._node(t)
        w = self._stepper().substep(self.ts[i], self.ws[i], self.ks[i], t - self.ts[i])
        return w[: self.sys.dim]

    def sample_derivative(self, t) -> np.ndarray:
        """Exact time derivative of the re-stepped dense output (forward mode)."""
        i = self._node(t)
        t0, z0 = self.ts[i], self.zs[i]
        s = t - t0
        sys, mu = self.sys, self.mu
        k = np.empty((6, sys.dim))
        dk = np.empty((6, sys.dim))
        k[0] = field_at(sys, t0, z0, mu)
        dk[0] = 0.0
        for j in range(1, 6):
            arg = z0 + s * (_A[j, :j] @ k[:j])
            darg = _A[j, :j] @ k[:j] + s * (_A[j, :j] @ dk[:j])
            J, ft = field_jacobian(sys, t0 + _C[j] * s, arg, mu, with_time=True)
            k[j] = field_at(sys, t0 + _C[j] * s, arg, mu)
            dk[j] = J @ darg + _C[j] * ft
        return _B5[:6] @ k + s * (_B5[:6] @ dk)

    def hermite(self, t) -> np.ndarray:
        """Cubic Hermite interpolant between step nodes."""
        i = min(self._node(t), len(self.ts) - 2)
        if i < 0:
            return self.z0
        ta, tb = self.ts[i], self.ts[i + 1]
        h = tb - ta
        u = (t - ta) / h
        d = self.sys.dim
        za, zb = self.ws[i, :d], self.ws[i + 1, :d]
        fa, fb = self.ks[i, :d], self.ks[i + 1, :d]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        return h00 * za + h10 * h * fa + h01 * zb + h11 * h * fb


@dataclass
class StickInterval:
    t_enter: float
    t_release: float
    ts: np.ndarray
    zbars: np.ndarray
    released: bool = True


@dataclass
class Trajectory:
    sys: SystemDefinition
    mu: float
    t0: float
    t1: float
    segments: list = field(default_factory=list)
    impacts: list = field(default_factory=list)
    sticking: list = field(default_factory=list)
    timeline: list = field(default_factory=list)  # ("arc"|"contact"|"stick", index)
    z_final: Optional[np.ndarray] = None

    @property
    def applied_impacts(self):
        return [ev for ev in self.impacts if not ev.grazing_flag]

    @property
    def grazing_contacts(self):
        return [ev for ev in self.impacts if ev.grazing_flag]

    def rows(self):
        """(t, z, piece_id) samples at integrator nodes, in time order."""
        n_dim = self.sys.dim
        piece = 0
        for kind, idx in self.timeline:
            if kind == "arc":
                arc = self.segments[idx]
                for t, z in zip(arc.ts, arc.zs):
                    yield float(t), z, piece
                piece += 1
            elif kind == "stick":
                st = self.sticking[idx]
                for t, zb in zip(st.ts, st.zbars):
                    z = np.zeros(n_dim)
                    z[2:] = zb
                    yield float(t), z, piece
                piece += 1


def _fmt(v):
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path):
    n = traj.sys.n
    header = ["t"]
    for k in range(1, n + 1):
        header += [f"x{k}", f"y{k}"]
    header.append("segment_id")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, z, pid in traj.rows():
            w.writerow([_fmt(t)] + [_fmt(v) for v in z] + [pid])


def write_impacts_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "Y", "grazing_flag"])
        for ev in traj.impacts:
            w.writerow([_fmt(ev.tau), _fmt(ev.Y), int(ev.grazing_flag)])


# ---------------------------------------------------------------------------
# smooth flow


def _bracket_in_step(st: _Stepper, t, w, k1, h, w_new, sub_cache=None):
    """Return (s_lo, s_hi) bracketing the first wall crossing in (0, h], or None.

    x1 is positive at s_lo and negative at s_hi.
    """
    d_sign = 1.0 if h > 0 else -1.0
    x_a, x_b = w[0], w_new[0]
    v_a, v_b = d_sign * w[1], d_sign * w_new[1]
    sub = lambda s: st.substep(t, w, k1, s)
    opts = st.opts

    if x_b < 0:
        if x_a > 0:
            return (0.0, h)
        # starting on the wall: look for the last positive excursion before the end
        if v_a > 0 and v_b < 0:
            s_m = brentq(lambda s: sub(s)[1], 0.0 if h > 0 else h, h if h > 0 else 0.0,
                         xtol=1e-15, rtol=4 * np.finfo(float).eps)
            if sub(s_m)[0] > 0:
                return (s_m, h)
        for frac in (0.125, 0.25, 0.5, 0.75):
            if sub(frac * h)[0] > 0:
                return (frac * h, h)
        return (0.0, 0.0)
    if v_a < 0 < v_b and x_a >= 0:
        lo, hi = (0.0, h) if h > 0 else (h, 0.0)
        s_m = brentq(lambda s: sub(s)[1], lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        w_m = sub(s_m)
        x_m = w_m[0]
        if x_m < 0:
            f1 = abs(st.sys.accel(t + s_m, w_m[: st.sys.dim], st.mu)[0])
            shallow = opts.graze_tol**2 / (2.0 * max(f1, 1e-300))
            if -x_m <= shallow:
                return None
            if x_a > 0:
                return (0.0, s_m)
            return (0.0, 0.0)
    return None


def _localize(st: _Stepper, t, w, k1, s_lo, s_hi):
    if s_lo == s_hi:
        return s_lo, st.substep(t, w, k1, s_lo)
    g = lambda s: st.substep(t, w, k1, s)[0]
    g_lo = g(s_lo)
    g_hi = g(s_hi)
    if not (g_lo >= 0 >= g_hi):
        raise BracketError(
            f"event bracket [{t + s_lo}, {t + s_hi}] has x1 values ({g_lo}, {g_hi})",
            t=t, z=w[: st.sys.dim],
        )
    if g_lo == 0:
        s = s_lo
    else:
        a, b = sorted((s_lo, s_hi))
        s = brentq(g, a, b, xtol=1e-15 * max(1.0, abs(t)), rtol=4 * np.finfo(float).eps)
    w_ev = st.substep(t, w, k1, s)
    return s, w_ev


def _integrate(st: _Stepper, t0, w0, t_end, h_init=None, detect=True):
    """Integrate until t_end or the first wall crossing. Returns (Arc, crossed, h_last)."""
    sys, opts = st.sys, st.opts
    direction = 1.0 if t_end >= t0 else -1.0
    cap = opts.step_cap(sys)
    span = abs(t_end - t0)
    h = min(cap, h_init if h_init else 1e-3 * sys.period, span) * direction
    t, w = float(t0), np.array(w0, dtype=float)
    k1 = st.fun(t, w)
    ts, ws, ks = [t], [w.copy()], [k1.copy()]
    crossed = False
    h_last = abs(h)
    n_steps = 0
    while (t_end - t) * direction > _TIME_EPS * max(1.0, abs(t_end)):
        remaining = t_end - t
        if abs(h) >= abs(remaining):
            h = remaining
        min_h = 1e-14 * max(1.0, abs(t))
        if abs(h) < min_h:
            raise StepSizeUnderflow(f"step size underflow at t={t}", t=t, z=w[: sys.dim])
        w_new, k_new, err_vec = st.step(t, w, k1, h)
        if not np.all(np.isfinite(w_new)):
            h *= 0.25
            continue
        err = st.error_norm(w, w_new, err_vec)
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** (-0.2))
            continue
        n_steps += 1
        if detect:
            br = _bracket_in_step(st, t, w, k1, h, w_new)
            if br is not None:
                s, w_ev = _localize(st, t, w, k1, *br)
                t_ev = t + s
                w_ev = w_ev.copy()
                w_ev[0] = 0.0
                k_ev = st.fun(t_ev, w_ev)
                if s != 0.0:
                    ts.append(t_ev)
                    ws.append(w_ev)
                    ks.append(k_ev)
                else:
                    ws[-1] = w_ev
                    ks[-1] = k_ev
                crossed = True
                h_last = abs(h)
                break
        t_prev = t
        t = t + h
        if abs(t_end - t) <= _TIME_EPS * max(1.0, abs(t_end)):
            t = float(t_end)
        w = w_new
        k1 = k_new
        ts.append(t)
        ws.append(w.copy())
        ks.append(k1.copy())
        h_last = abs(t - t_prev)
        fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** (-0.2)))
        h = direction * min(cap, abs(h) * fac)
    arc = Arc(
        sys=sys, mu=st.mu, ts=np.array(ts), ws=np.array(ws), ks=np.array(ks),
        variational=st.variational, end_reason="contact" if crossed else "t_end", opts=opts,
    )
    return arc, crossed, h_last


def flow_smooth(sys: SystemDefinition, s0: State, t_end, mu, opts: IntegratorOptions = DEFAULT_OPTIONS,
                variational=False, detect=True):
    """Integrate the smooth field from ``s0`` to ``t_end`` or the first downward wall crossing.

    Returns ``(arc, crossed)``.
    """
    z0 = np.asarray(s0.z, dtype=float)
    st = _Stepper(sys, mu, opts, variational)
    w0 = np.concatenate((z0, np.eye(sys.dim).ravel())) if variational else z0
    arc, crossed, _ = _integrate(st, s0.t, w0, t_end, detect=detect)
    return arc, crossed


def locate_impact(arc: Arc, opts: IntegratorOptions = None):
    """First downward zero of x1 on a (possibly event-free) arc, or None.

    Brackets are found from step nodes and the Hermite interpolant, then refined
    by Brent's method on the re-stepped dense output.
    """
    opts = opts or arc.opts
    st = _Stepper(arc.sys, arc.mu, opts, arc.variational)
    for i in range(len(arc.ts) - 1):
        t, w, k1 = arc.ts[i], arc.ws[i], arc.ks[i]
        h = arc.ts[i + 1] - t
        w_new = arc.ws[i + 1]
        br = _bracket_in_step(st, t, w, k1, h, w_new)
        if br is None:
            continue
        s, w_ev = _localize(st, t, w, k1, *br)
        return float(t + s)
    return None


# ---------------------------------------------------------------------------
# sticking


def _stick(sys, t_enter, zbar, t_limit, mu, opts: IntegratorOptions):
    """Constrained motion until the normal force turns positive (or t_limit)."""
    g = lambda t, zb: release_test(sys, t, zb, mu)
    cap = opts.step_cap(sys)
    if sys.n == 1:
        t = t_enter
        ts = [t]
        while t < t_limit:
            t_next = min(t + cap / 4, t_limit)
            if g(t_next, zbar) > 0:
                tr = brentq(lambda s: g(s, zbar), t, t_next, xtol=1e-15 * max(1.0, abs(t)),
                            rtol=4 * np.finfo(float).eps)
                tr = _nudge_positive(lambda s: g(s, zbar), tr, t_next)
                ts.append(tr)
                return StickInterval(t_enter, tr, np.array(ts), np.zeros((len(ts), 0))), tr, zbar
            t = t_next
            ts.append(t)
        return StickInterval(t_enter, t, np.array(ts), np.zeros((len(ts), 0)), released=False), t, zbar

    st = _Stepper(sys, mu, opts, reduced=True)
    t, w = float(t_enter), np.array(zbar, dtype=float)
    k1 = st.fun(t, w)
    ts, ws = [t], [w.copy()]
    h = min(cap, 1e-3 * sys.period)
    while t < t_limit - _TIME_EPS * max(1.0, abs(t_limit)):
        h = min(h, t_limit - t)
        w_new, k_new, err_vec = st.step(t, w, k1, h)
        err = st.error_norm(w, w_new, err_vec)
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** (-0.2))
            if h < 1e-14 * max(1.0, abs(t)):
                raise StepSizeUnderflow("step size underflow while sticking", t=t, z=w)
            continue
        if g(t + h, w_new) > 0:
            gs = lambda s: g(t + s, st.substep(t, w, k1, s))
            s = brentq(gs, 0.0, h, xtol=1e-15 * max(1.0, abs(t)), rtol=4 * np.finfo(float).eps)
            s = _nudge_positive(gs, s, h)
            w_r = st.substep(t, w, k1, s)
            ts.append(t + s)
            ws.append(w_r)
            return StickInterval(t_enter, t + s, np.array(ts), np.array(ws)), t + s, w_r
        t += h
        w, k1 = w_new, k_new
        ts.append(t)
        ws.append(w.copy())
        fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** (-0.2)))
        h = min(cap, h * fac)
    return StickInterval(t_enter, t, np.array(ts), np.array(ws), released=False), t, w


def _nudge_positive(g, s, s_max):
    """Move a root slightly forward until g is strictly positive."""
    step = 1e-15 * max(1.0, abs(s))
    for _ in range(60):
        if g(s) > 0 or s >= s_max:
            return min(s, s_max)
        s += step
        step *= 2.0
    return s


# ---------------------------------------------------------------------------
# hybrid simulation


def _is_sticking_entry(sys, t, z, mu):
    return release_test(sys, t, z[2:], mu) <= 0


def simulate(sys: SystemDefinition, s0: State, t1, mu, opts: IntegratorOptions = DEFAULT_OPTIONS,
             variational=False) -> Trajectory:
    """Hybrid trajectory from ``s0`` to time ``t1`` (``t1 < s0.t`` integrates backwards).

    Backward integration uses the inverse impact law and does not support
    sticking. With ``variational=True`` every arc carries its flow Jacobian.
    """
    direction = 1.0 if t1 >= s0.t else -1.0
    traj = Trajectory(sys=sys, mu=mu, t0=float(s0.t), t1=float(t1))
    t = float(s0.t)
    z = np.array(s0.z, dtype=float)
    if z[0] < -opts.tol_event:
        raise ModelError(f"initial state outside the admissible region: x1={z[0]}")
    st = _Stepper(sys, mu, opts, variational)
    recent = deque()
    h_carry = None
    last_contact_t = None
    stuck_contacts = 0

    def done(tt):
        return (t1 - tt) * direction <= _TIME_EPS * max(1.0, abs(t1))

    try:
        while not done(t):
            # decide what happens on the wall before flowing
            if z[0] <= 0.0:
                z[0] = 0.0
                v = direction * z[1]
                f1 = release_test(sys, t, z[2:], mu)
                if v < 0:
                    contact = _handle_contact(sys, t, z, mu, opts, direction, traj)
                    z = contact
                    ev = traj.impacts[-1]
                    if last_contact_t is not None and abs(ev.tau - last_contact_t) <= 1e-14 * max(1.0, abs(t)):
                        stuck_contacts += 1
                        if stuck_contacts > 3:
                            raise IntegratorError("repeated contacts at the same instant", t=t, z=z)
                    else:
                        stuck_contacts = 0
                    last_contact_t = ev.tau
                    if direction > 0 and not ev.grazing_flag:
                        recent.append((ev.tau, ev.Y))
                        while recent and recent[0][0] < ev.tau - opts.chatter_window:
                            recent.popleft()
                        if _should_stick(sys, t, z, mu, opts, recent):
                            z[1] = 0.0
                    continue
                if v == 0 and f1 <= 0:
                    if direction < 0:
                        raise IntegratorError("backward integration reached a sticking phase", t=t, z=z)
                    if variational:
                        raise IntegratorError("variational integration through a sticking phase", t=t, z=z)
                    interval, t, zbar = _stick(sys, t, z[2:], t1, mu, opts)
                    traj.sticking.append(interval)
                    traj.timeline.append(("stick", len(traj.sticking) - 1))
                    z = np.concatenate(([0.0, 0.0], zbar))
                    recent.clear()
                    continue
            w = np.concatenate((z, np.eye(sys.dim).ravel())) if variational else z
            arc, crossed, h_carry = _integrate(st, t, w, t1, h_init=h_carry)
            traj.segments.append(arc)
            traj.timeline.append(("arc", len(traj.segments) - 1))
            t = arc.t1
            z = arc.z1
            if not crossed:
                break
            z[0] = 0.0
            if direction * z[1] >= 0:
                # numerically tangent contact reached with non-negative speed: lift-off
                z[1] = 0.0
    except IntegratorError as exc:
        if exc.trajectory is None:
            exc.trajectory = traj
        raise
    traj.z_final = z.copy()
    return traj


def _should_stick(sys, t, z, mu, opts, recent):
    if release_test(sys, t, z[2:], mu) > 0:
        return False
    if abs(z[1]) < opts.v_stick:
        return True
    if len(recent) >= opts.max_impacts:
        ys = [Y for _, Y in list(recent)[-opts.max_impacts:]]
        return all(b <= a for a, b in zip(ys, ys[1:]))
    return False


def _handle_contact(sys, t, z, mu, opts, direction, traj):
    """Apply the wall law to a state on the wall moving into it; record the event."""
    z = np.array(z, dtype=float)
    z[0] = 0.0
    speed = -direction * z[1]  # approach speed in the integration direction
    f1 = release_test(sys, t, z[2:], mu)
    if direction > 0:
        Y = speed
        if Y >= opts.graze_tol:
            post = apply_impact(sys, State(t, z), mu).z
            traj.impacts.append(ImpactEvent(tau=t, z_pre=z.copy(), z_post=post.copy(), Y=Y))
            traj.timeline.append(("contact", len(traj.impacts) - 1))
            return post
        if f1 == 0:
            raise DegenerateGrazing(f"grazing contact with zero normal acceleration at t={t}", t=t, z=z)
        post = z.copy()
        post[1] = 0.0
        traj.impacts.append(ImpactEvent(tau=t, z_pre=z.copy(), z_post=post.copy(), Y=Y, grazing_flag=True))
        traj.timeline.append(("contact", len(traj.impacts) - 1))
        return post
    # backward: current state is the post-impact state
    v_post = speed
    r_small = sys.restitution(0.0, mu)
    if v_post >= r_small * opts.graze_tol:
        pre = invert_impact(sys, State(t, z), mu).z
        traj.impacts.append(ImpactEvent(tau=t, z_pre=pre.copy(), z_post=z.copy(), Y=-pre[1]))
        traj.timeline.append(("contact", len(traj.impacts) - 1))
        return pre
    if f1 <= 0:
        raise IntegratorError("backward grazing contact without positive normal acceleration", t=t, z=z)
    pre = z.copy()
    pre[1] = 0.0
    traj.impacts.append(ImpactEvent(tau=t, z_pre=pre.copy(), z_post=z.copy(), Y=v_post, grazing_flag=True))
    traj.timeline.append(("contact", len(traj.impacts) - 1))
    return pre


def stroboscopic_map(sys: SystemDefinition, theta, z0, mu, opts: IntegratorOptions = DEFAULT_OPTIONS,
                     phase=0.0, periods=1):
    """State at ``phase + periods*T - theta`` of the solution started at ``phase - theta``."""
    t0 = phase - theta
    traj = simulate(sys, State(t0, np.asarray(z0, dtype=float)), t0 + periods * sys.period, mu, opts)
    return traj.z_final


def inverse_stroboscopic_map(sys: SystemDefinition, theta, z0, mu, opts: IntegratorOptions = DEFAULT_OPTIONS,
                             phase=0.0):
    """Inverse of :func:`stroboscopic_map` by backward-time integration."""
    t0 = phase + sys.period - theta
    traj = simulate(sys, State(t0, np.asarray(z0, dtype=float)), t0 - sys.period, mu, opts)
    return traj.z_final
