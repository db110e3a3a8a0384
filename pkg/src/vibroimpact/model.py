"""Vibro-impact system definition: smooth field, Newtonian impact law, sticking.

State vectors are ordered ``(x1, y1, x2, y2, ..., xn, yn)``; the wall is the
hyperplane ``x1 = 0`` and the admissible region is ``x1 >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ModelError

FD_STEP = 6e-6


@dataclass(frozen=True)
class SystemDefinition:
    """Periodically forced system with a unilateral constraint at ``x1 = 0``.

    ``f(t, z, mu)`` returns the n accelerations. ``r(Y, mu)`` is the
    restitution coefficient as a function of the (nonnegative) approach speed
    ``Y = -y1``. ``df`` and ``dr`` are optional analytic partials; when absent
    finite differences are used.
    """

    n: int
    period: float
    f: Callable
    r: Callable
    df: Optional[Callable] = None
    dr: Optional[Callable] = None
    mu_range: tuple = (0.0, 1.0)
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        lo, hi = self.mu_range
        if not lo <= hi:
            raise ValueError(f"empty mu_range {self.mu_range}")

    @property
    def dim(self) -> int:
        return 2 * self.n

    def accel(self, t, z, mu) -> np.ndarray:
        out = np.asarray(self.f(t, z, mu), dtype=float).reshape(self.n)
        if not np.all(np.isfinite(out)):
            raise ModelError(f"non-finite acceleration at t={t}, z={np.asarray(z).tolist()}, mu={mu}")
        return out

    def restitution(self, Y, mu) -> float:
        if Y < 0:
            raise ModelError(f"restitution queried with negative approach speed {Y}")
        val = float(self.r(Y, mu))
        if not (0.0 < val <= 1.0):
            raise ModelError(f"restitution r({Y}, {mu}) = {val} outside (0, 1]")
        return val

    def restitution_slope(self, Y, mu) -> float:
        """d r / d Y at approach speed ``Y``."""
        if self.dr is not None:
            return float(self.dr(Y, mu))
        h = FD_STEP * max(1.0, abs(Y))
        if Y >= h:
            return (float(self.r(Y + h, mu)) - float(self.r(Y - h, mu))) / (2 * h)
        # one-sided near Y = 0, second order
        r0, r1, r2 = (float(self.r(Y + k * h, mu)) for k in range(3))
        return (-3 * r0 + 4 * r1 - r2) / (2 * h)


@dataclass(frozen=True)
class State:
    t: float
    z: np.ndarray

    @property
    def x(self):
        return self.z[0::2]

    @property
    def y(self):
        return self.z[1::2]

    @property
    def zbar(self):
        return self.z[2:]

    @property
    def xbar(self):
        return self.z[2::2]

    @property
    def ybar(self):
        return self.z[3::2]


@dataclass(frozen=True)
class ImpactEvent:
    """Contact with the wall. ``z_post`` equals ``z_pre`` for grazing contacts."""

    tau: float
    z_pre: np.ndarray
    z_post: np.ndarray
    Y: float
    grazing_flag: bool = False


def eval_vector_field(sys: SystemDefinition, s: State, mu) -> np.ndarray:
    return field_at(sys, s.t, s.z, mu)


def field_at(sys: SystemDefinition, t, z, mu) -> np.ndarray:
    out = np.empty(sys.dim)
    out[0::2] = z[1::2]
    out[1::2] = sys.accel(t, z, mu)
    return out


def accel_partials(sys: SystemDefinition, t, z, mu) -> np.ndarray:
    """(2n+1) x n array of partials of f: row 0 is d/dt, rows 1.. are d/dz_j."""
    if sys.df is not None:
        out = np.asarray(sys.df(t, z, mu), dtype=float).reshape(sys.dim + 1, sys.n)
        if not np.all(np.isfinite(out)):
            raise ModelError(f"non-finite df at t={t}")
        return out
    z = np.asarray(z, dtype=float)
    out = np.empty((sys.dim + 1, sys.n))
    h = FD_STEP * max(1.0, abs(t))
    out[0] = (sys.accel(t + h, z, mu) - sys.accel(t - h, z, mu)) / (2 * h)
    for j in range(sys.dim):
        h = FD_STEP * max(1.0, abs(z[j]))
        zp = z.copy()
        zm = z.copy()
        zp[j] += h
        zm[j] -= h
        out[j + 1] = (sys.accel(t, zp, mu) - sys.accel(t, zm, mu)) / (2 * h)
    return out


def field_jacobian(sys: SystemDefinition, t, z, mu, with_time=False):
    """Jacobian of the first-order field w.r.t. z (and optionally its t-partial)."""
    p = accel_partials(sys, t, z, mu)
    J = np.zeros((sys.dim, sys.dim))
    for k in range(sys.n):
        J[2 * k, 2 * k + 1] = 1.0
        J[2 * k + 1, :] = p[1:, k]
    if with_time:
        dt = np.zeros(sys.dim)
        dt[1::2] = p[0]
        return J, dt
    return J


def apply_impact(sys: SystemDefinition, s_pre: State, mu) -> State:
    """Newtonian reset ``y1 -> -r(-y1, mu) * y1``; everything else unchanged."""
    y1 = s_pre.z[1]
    if not y1 < 0:
        raise ModelError(
            f"apply_impact needs an approaching state (y1 < 0), got y1={y1}; "
            "route grazing/sticking contacts elsewhere"
        )
    Y = -y1
    z = np.array(s_pre.z, dtype=float)
    z[1] = sys.restitution(Y, mu) * Y
    return State(s_pre.t, z)


def invert_impact(sys: SystemDefinition, s_post: State, mu) -> State:
    """Undo a reset: find the approach speed Y with r(Y) * Y = y1(t+0)."""
    v = s_post.z[1]
    if not v > 0:
        raise ModelError(f"invert_impact needs a departing state (y1 > 0), got y1={v}")
    g = lambda Y: sys.restitution(Y, mu) * Y - v
    Y = v / sys.restitution(v, mu)
    for _ in range(50):
        slope = sys.restitution(Y, mu) + sys.restitution_slope(Y, mu) * Y
        step = g(Y) / slope
        Y_new = Y - step
        if Y_new <= 0:
            Y_new = 0.5 * Y
        if abs(Y_new - Y) <= 1e-15 * max(1.0, Y):
            Y = Y_new
            break
        Y = Y_new
    else:
        hi = v
        while g(hi) < 0:
            hi *= 2.0
        Y = brentq(g, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
    z = np.array(s_post.z, dtype=float)
    z[1] = -Y
    return State(s_post.t, z)


def sticking_vector_field(sys: SystemDefinition, t, zbar, mu) -> np.ndarray:
    """Reduced dynamics of the tangential coordinates while (x1, y1) = (0, 0)."""
    zbar = np.asarray(zbar, dtype=float)
    if sys.n == 1:
        return np.zeros(0)
    z = np.concatenate(([0.0, 0.0], zbar))
    return field_at(sys, t, z, mu)[2:]


def release_test(sys: SystemDefinition, t, zbar, mu) -> float:
    """Normal acceleration on the wall; sticking persists while this is <= 0."""
    z = np.concatenate(([0.0, 0.0], np.asarray(zbar, dtype=float)))
    return float(sys.accel(t, z, mu)[0])
