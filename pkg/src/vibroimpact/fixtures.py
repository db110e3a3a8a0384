"""Built-in systems used by the CLI registry and the test suite.

* ``bouncing_ball``: constant gravity, closed-form parabolas.
* ``impact_oscillator``: damped linear oscillator against a wall, forced so
  that the non-impacting periodic orbit grazes the wall at ``t = 0`` exactly
  when ``mu = 0`` (``mu`` is the forcing-amplitude offset).
* ``coupled_oscillator``: two masses, wall on the first; same grazing
  normalisation.
* ``vibrating_table``: ball on a harmonically shaken table, written in the
  table frame; has a closed-form one-impact periodic orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SystemDefinition


@dataclass(frozen=True)
class ConstantRestitution:
    value: float

    def __call__(self, Y, mu):
        return self.value


@dataclass(frozen=True)
class ZeroSlope:
    def __call__(self, Y, mu):
        return 0.0


@dataclass(frozen=True)
class SpeedDependentRestitution:
    """r(Y) = r0 / (1 + c Y): decreasing with approach speed, always in (0, r0]."""

    r0: float
    c: float

    def __call__(self, Y, mu):
        return self.r0 / (1.0 + self.c * Y)


@dataclass(frozen=True)
class SpeedDependentRestitutionSlope:
    r0: float
    c: float

    def __call__(self, Y, mu):
        return -self.r0 * self.c / (1.0 + self.c * Y) ** 2


def _restitution(r, r_speed):
    if r_speed:
        return SpeedDependentRestitution(r, r_speed), SpeedDependentRestitutionSlope(r, r_speed)
    return ConstantRestitution(r), ZeroSlope()


# --------------------------------------------------------------------------
# bouncing ball


@dataclass(frozen=True)
class Gravity:
    g: float

    def __call__(self, t, z, mu):
        return np.array([-self.g])


@dataclass(frozen=True)
class GravityPartials:
    def __call__(self, t, z, mu):
        return np.zeros((3, 1))


def bouncing_ball(g=1.0, r=0.5, period=1.0, mu_max=1.0):
    rf, drf = _restitution(r, 0.0)
    return SystemDefinition(
        n=1,
        period=period,
        f=Gravity(g),
        df=GravityPartials(),
        r=rf,
        dr=drf,
        mu_range=(0.0, mu_max),
        name="bouncing_ball",
        params=dict(g=g, r=r, period=period, mu_max=mu_max),
    )


# --------------------------------------------------------------------------
# linear oscillators with grazing normalisation


@dataclass(frozen=True)
class LinearForcedField:
    """f = b - K x - C y - (a_graze + mu) p cos(omega t + phase)."""

    K: tuple
    C: tuple
    b: tuple
    p: tuple
    omega: float
    phase: float
    a_graze: float

    def __call__(self, t, z, mu):
        x = z[0::2]
        y = z[1::2]
        K = np.asarray(self.K)
        C = np.asarray(self.C)
        amp = (self.a_graze + mu) * math.cos(self.omega * t + self.phase)
        return np.asarray(self.b) - K @ x - C @ y - amp * np.asarray(self.p)


@dataclass(frozen=True)
class LinearForcedPartials:
    K: tuple
    C: tuple
    p: tuple
    omega: float
    phase: float
    a_graze: float

    def __call__(self, t, z, mu):
        K = np.asarray(self.K)
        C = np.asarray(self.C)
        n = K.shape[0]
        out = np.empty((2 * n + 1, n))
        out[0] = (self.a_graze + mu) * self.omega * math.sin(self.omega * t + self.phase) * np.asarray(self.p)
        out[1::2] = -K.T
        out[2::2] = -C.T
        return out


def _tuplify(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return tuple(float(v) for v in a)
    return tuple(tuple(float(v) for v in row) for row in a)


def linear_grazing_system(K, C, b, p, omega, r, r_speed=0.0, mu_max=0.5, name="linear"):
    """Linear n-DOF oscillator whose free periodic orbit grazes x1 = 0 at t = 0 for mu = 0."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    n = K.shape[0]
    H = np.linalg.inv(K - omega**2 * np.eye(n) + 1j * omega * C)
    h = (H @ p)[0]
    x_static = np.linalg.solve(K, b)
    if x_static[0] <= 0:
        raise ValueError("static equilibrium must lie strictly inside x1 > 0")
    phase = -math.atan2(h.imag, h.real)
    a_graze = x_static[0] / abs(h)
    fld = LinearForcedField(_tuplify(K), _tuplify(C), _tuplify(b), _tuplify(p), float(omega), phase, a_graze)
    dfld = LinearForcedPartials(_tuplify(K), _tuplify(C), _tuplify(p), float(omega), phase, a_graze)
    rf, drf = _restitution(r, r_speed)
    return SystemDefinition(
        n=n,
        period=2 * math.pi / omega,
        f=fld,
        df=dfld,
        r=rf,
        dr=drf,
        mu_range=(0.0, mu_max),
        name=name,
    )


def free_orbit(sys: SystemDefinition, t, mu) -> np.ndarray:
    """Non-impacting periodic solution of a ``linear_grazing_system`` (ignores the wall)."""
    fld = sys.f
    K = np.asarray(fld.K)
    C = np.asarray(fld.C)
    n = K.shape[0]
    om = fld.omega
    H = np.linalg.inv(K - om**2 * np.eye(n) + 1j * om * C)
    xs = np.linalg.solve(K, np.asarray(fld.b))
    amp = -(fld.a_graze + mu) * (H @ np.asarray(fld.p))
    e = np.exp(1j * (om * t + fld.phase))
    z = np.empty(2 * n)
    z[0::2] = xs + (amp * e).real
    z[1::2] = (1j * om * amp * e).real
    return z


def free_monodromy_generator(sys: SystemDefinition) -> np.ndarray:
    """Constant matrix M with z' = M z + forcing for a linear system."""
    fld = sys.f
    K = np.asarray(fld.K)
    C = np.asarray(fld.C)
    n = K.shape[0]
    M = np.zeros((2 * n, 2 * n))
    for k in range(n):
        M[2 * k, 2 * k + 1] = 1.0
        M[2 * k + 1, 0::2] = -K[k]
        M[2 * k + 1, 1::2] = -C[k]
    return M


# default fixture: damped natural frequency 0.45 of the forcing frequency, so
# the free-flight monodromy has a12 > 0 and (A^2)12 < 0 (wd*T in (pi/2, pi)).
# The one-impact orbit is stable for mu >= 0.2 and a saddle inside a chaotic
# attractor for 0 < mu <= 0.1.
OSC_DEFAULTS = dict(zeta=0.005, wd_ratio=0.45, omega=1.0, mean=1.0, r=0.9, r_speed=0.0, mu_max=5.0)


def impact_oscillator(zeta=None, wd_ratio=None, omega=None, mean=None, r=None, r_speed=None, mu_max=None):
    """x'' + 2 zeta x' + k x = b - a cos(omega t + phase), wall at x = 0.

    ``k`` is set from the damped-frequency ratio ``wd/omega`` and ``b = k*mean``
    so the static equilibrium sits at ``x = mean``.
    """
    cfg = dict(OSC_DEFAULTS)
    for key, val in dict(zeta=zeta, wd_ratio=wd_ratio, omega=omega, mean=mean, r=r, r_speed=r_speed, mu_max=mu_max).items():
        if val is not None:
            cfg[key] = val
    om = cfg["omega"]
    wd = cfg["wd_ratio"] * om
    k = wd**2 + cfg["zeta"] ** 2
    sys = linear_grazing_system(
        K=[[k]],
        C=[[2 * cfg["zeta"]]],
        b=[k * cfg["mean"]],
        p=[1.0],
        omega=om,
        r=cfg["r"],
        r_speed=cfg["r_speed"],
        mu_max=cfg["mu_max"],
        name="impact_oscillator",
    )
    return _with_params(sys, cfg)


COUPLED_DEFAULTS = dict(zeta=0.02, k1=0.12, k2=0.5, kc=0.05, omega=1.0, mean=1.0, r=0.8, r_speed=0.0, mu_max=0.5)


def coupled_oscillator(**overrides):
    """Two masses coupled by a spring ``kc``; the first one hits the wall."""
    cfg = dict(COUPLED_DEFAULTS)
    for key, val in overrides.items():
        if key not in cfg:
            raise TypeError(f"unknown parameter {key!r}")
        if val is not None:
            cfg[key] = val
    k1, k2, kc, z = cfg["k1"], cfg["k2"], cfg["kc"], cfg["zeta"]
    K = np.array([[k1 + kc, -kc], [-kc, k2 + kc]])
    C = 2 * z * np.eye(2)
    # static force chosen so both equilibria sit at ``mean``
    b = K @ np.array([cfg["mean"], cfg["mean"]])
    sys = linear_grazing_system(
        K=K, C=C, b=b, p=[1.0, 0.0], omega=cfg["omega"], r=cfg["r"], r_speed=cfg["r_speed"],
        mu_max=cfg["mu_max"], name="coupled_oscillator",
    )
    return _with_params(sys, cfg)


# --------------------------------------------------------------------------
# ball on a vibrating table


@dataclass(frozen=True)
class TableField:
    g: float
    amp: float
    omega: float

    def __call__(self, t, z, mu):
        return np.array([-self.g + (self.amp + mu) * self.omega**2 * math.cos(self.omega * t)])


@dataclass(frozen=True)
class TablePartials:
    amp: float
    omega: float

    def __call__(self, t, z, mu):
        out = np.zeros((3, 1))
        out[0, 0] = -(self.amp + mu) * self.omega**3 * math.sin(self.omega * t)
        return out


def vibrating_table(g=1.0, amp=0.3, omega=2.0, r=0.5, mu_max=0.5):
    rf, drf = _restitution(r, 0.0)
    sys = SystemDefinition(
        n=1,
        period=2 * math.pi / omega,
        f=TableField(g, amp, omega),
        df=TablePartials(amp, omega),
        r=rf,
        dr=drf,
        mu_range=(0.0, mu_max),
        name="vibrating_table",
    )
    return _with_params(sys, dict(g=g, amp=amp, omega=omega, r=r, mu_max=mu_max))


def table_periodic_orbit(sys: SystemDefinition, mu=0.0, branch=0):
    """Closed-form one-impact periodic orbit of ``vibrating_table``.

    Returns ``(tau, Y, state)`` where ``state(t)`` evaluates the orbit on the
    flight ``[tau, tau + T)``. ``branch`` selects one of the two impact phases.
    """
    g, A, om = sys.f.g, sys.f.amp + mu, sys.f.omega
    r = sys.r(0.0, mu)
    T = sys.period
    Y = g * T / (1 + r)
    s = g * T * (r - 1) / (2 * (1 + r) * A * om)
    if abs(s) > 1:
        raise ValueError("no one-impact periodic orbit for these parameters")
    tau = math.asin(s) / om if branch == 0 else (math.pi - math.asin(s)) / om
    tau %= T

    def state(t):
        sft = t - tau
        x = (-A * math.cos(om * t) + A * math.cos(om * tau) - A * om * math.sin(om * tau) * sft
             + r * Y * sft - 0.5 * g * sft**2)
        y = A * om * math.sin(om * t) - A * om * math.sin(om * tau) + r * Y - g * sft
        return np.array([x, y])

    return tau, Y, state


def _with_params(sys, cfg):
    return SystemDefinition(
        n=sys.n, period=sys.period, f=sys.f, df=sys.df, r=sys.r, dr=sys.dr,
        mu_range=sys.mu_range, name=sys.name, params=dict(cfg),
    )


REGISTRY = {
    "bouncing_ball": bouncing_ball,
    "impact_oscillator": impact_oscillator,
    "coupled_oscillator": coupled_oscillator,
    "vibrating_table": vibrating_table,
}


def make_system(name: str, **params) -> SystemDefinition:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)
