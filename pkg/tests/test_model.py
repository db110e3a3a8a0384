import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibroimpact.errors import ModelError
from vibroimpact.fixtures import bouncing_ball, coupled_oscillator, impact_oscillator, make_system
from vibroimpact.model import (State, SystemDefinition, apply_impact, eval_vector_field, invert_impact, release_test,
                               sticking_vector_field)


def const_r(v):
    return lambda Y, mu: v


def cos_system():
    return SystemDefinition(n=1, period=2 * math.pi, f=lambda t, z, mu: np.array([math.cos(t)]), r=const_r(1.0))


def test_ball_field():
    out = eval_vector_field(bouncing_ball(g=1.0), State(0.0, np.array([1.0, 0.0])), 0.0)
    np.testing.assert_array_equal(out, [0.0, -1.0])


def test_cos_field_at_zero():
    out = eval_vector_field(cos_system(), State(0.0, np.array([0.3, 0.7])), 0.0)
    np.testing.assert_allclose(out, [0.7, 1.0])


def test_coupled_field_matches_hand_coded():
    sys = coupled_oscillator()
    p = sys.params
    k1, k2, kc, zeta, om, mean = p["k1"], p["k2"], p["kc"], p["zeta"], p["omega"], p["mean"]
    a_graze = sys.f.a_graze
    rng = np.random.default_rng(1)
    for _ in range(5):
        t, mu = rng.uniform(0, 10), rng.uniform(0, 0.5)
        x1, y1, x2, y2 = rng.normal(size=4)
        forcing = (a_graze + mu) * math.cos(om * t + sys.f.phase)
        f1 = (k1 + kc) * mean - kc * mean - (k1 + kc) * x1 + kc * x2 - 2 * zeta * y1 - forcing
        f2 = -kc * mean + (k2 + kc) * mean + kc * x1 - (k2 + kc) * x2 - 2 * zeta * y2
        out = eval_vector_field(sys, State(t, np.array([x1, y1, x2, y2])), mu)
        np.testing.assert_allclose(out, [y1, f1, y2, f2], rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("r, y1, expected", [(0.5, -2.0, 1.0), (1.0, -3.0, 3.0)])
def test_impact_constant_r(r, y1, expected):
    sys = SystemDefinition(n=2, period=1.0, f=lambda t, z, mu: np.zeros(2), r=const_r(r))
    z = np.array([0.0, y1, 0.4, -0.2])
    post = apply_impact(sys, State(1.0, z), 0.0)
    assert post.z[1] == expected
    np.testing.assert_array_equal(post.z[2:], z[2:])
    assert post.z[0] == 0.0 and post.t == 1.0


def test_impact_speed_dependent_r():
    sys = SystemDefinition(n=1, period=1.0, f=lambda t, z, mu: np.zeros(1), r=lambda Y, mu: 0.8 + 0.1 * Y)
    post = apply_impact(sys, State(0.0, np.array([0.0, -0.5])), 0.0)
    assert post.z[1] == pytest.approx(0.425, abs=1e-15)


def test_impact_requires_approach():
    with pytest.raises(ModelError):
        apply_impact(bouncing_ball(), State(0.0, np.array([0.0, 0.1])), 0.0)


def test_restitution_rejects_negative_speed_and_bad_values():
    with pytest.raises(ModelError):
        bouncing_ball().restitution(-1.0, 0.0)
    bad = SystemDefinition(n=1, period=1.0, f=lambda t, z, mu: np.zeros(1), r=const_r(1.5))
    with pytest.raises(ModelError):
        bad.restitution(1.0, 0.0)


def test_nonfinite_field_raises():
    bad = SystemDefinition(n=1, period=1.0, f=lambda t, z, mu: np.array([np.nan]), r=const_r(0.5))
    with pytest.raises(ModelError):
        bad.accel(0.0, np.zeros(2), 0.0)


def test_sticking_field_n1_is_empty():
    assert sticking_vector_field(bouncing_ball(), 0.0, np.zeros(0), 0.0).shape == (0,)


def test_sticking_field_is_restriction():
    sys = coupled_oscillator()
    zbar = np.array([0.7, -0.1])
    full = eval_vector_field(sys, State(0.3, np.concatenate(([0.0, 0.0], zbar))), 0.1)
    np.testing.assert_array_equal(sticking_vector_field(sys, 0.3, zbar, 0.1), full[2:])


def test_release_test_gravity_negative():
    sys = bouncing_ball(g=2.0)
    for t in np.linspace(0, 5, 7):
        assert release_test(sys, t, np.zeros(0), 0.0) == -2.0


def test_release_sin_crosses_at_two_pi():
    sys = SystemDefinition(n=1, period=2 * math.pi, f=lambda t, z, mu: np.array([math.sin(t)]), r=const_r(0.5))
    from scipy.optimize import brentq

    t_rel = brentq(lambda t: release_test(sys, t, np.zeros(0), 0.0), math.pi + 0.5, 2 * math.pi + 0.5)
    assert t_rel == pytest.approx(2 * math.pi, abs=1e-12)
    assert release_test(sys, 1.5 * math.pi, np.zeros(0), 0.0) < 0


def test_registry():
    assert make_system("impact_oscillator").name == "impact_oscillator"
    with pytest.raises(KeyError):
        make_system("nope")


speeds = st.floats(min_value=1e-6, max_value=50.0)


@settings(max_examples=60, deadline=None)
@given(Y=speeds, zbar=st.lists(st.floats(-10, 10), min_size=2, max_size=2))
def test_impact_properties(Y, zbar):
    sys = coupled_oscillator(r=0.8, r_speed=0.3)
    z = np.array([0.0, -Y] + zbar)
    post = apply_impact(sys, State(0.0, z), 0.0)
    # energy in the normal coordinate never increases; tangential part untouched
    assert abs(post.z[1]) <= abs(z[1])
    assert np.array_equal(post.z[2:], z[2:])
    back = invert_impact(sys, post, 0.0)
    assert back.z[1] == pytest.approx(-Y, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(Y=speeds)
def test_elastic_impact_is_involution(Y):
    sys = SystemDefinition(n=1, period=1.0, f=lambda t, z, mu: np.zeros(1), r=const_r(1.0))
    once = apply_impact(sys, State(0.0, np.array([0.0, -Y])), 0.0)
    flipped = State(0.0, np.array([0.0, -once.z[1]]))
    assert apply_impact(sys, flipped, 0.0).z[1] == Y


@settings(max_examples=50, deadline=None)
@given(t=st.floats(-20, 20), mu=st.floats(0, 0.5), z=st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_fields_are_periodic(t, mu, z):
    for sys in (impact_oscillator(), coupled_oscillator()):
        zz = np.array(z[: sys.dim])
        a = eval_vector_field(sys, State(t, zz), mu)
        b = eval_vector_field(sys, State(t + sys.period, zz), mu)
        assert np.linalg.norm(a - b) <= 1e-10 * (1 + np.linalg.norm(a))
