import math

import numpy as np
import pytest

from vibroimpact.chaosdiag import (
    ChaosOptions,
    LinearMap,
    ManifoldCurve,
    NonHyperbolicError,
    StroboscopicMap,
    chaos_report,
    find_homoclinic,
    find_periodic_points,
    grow_manifold,
    lambda_residuals,
    local_manifolds,
    lyapunov_exponent,
    polyline_intersections,
    seed_grid,
)
from vibroimpact.fixtures import bouncing_ball
from vibroimpact.integrator import simulate
from vibroimpact.model import State
from vibroimpact.orbit import find_periodic

SADDLE = LinearMap(np.diag([2.0, 0.5]))


def _distance_to_polyline(q, pts):
    a, b = pts[:-1], pts[1:]
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", q - a, d) / np.maximum(np.einsum("ij,ij->i", d, d), 1e-300), 0, 1)
    return float(np.min(np.linalg.norm(a + t[:, None] * d - q, axis=1)))


def _curve_distance(q, W):
    return min(_distance_to_polyline(q, b["points"]) for b in W.branches if len(b["points"]) > 1)


# ---------------------------------------------------------------------------
# linear stub


def test_linear_local_manifolds_are_axes():
    loc = local_manifolds(SADDLE, np.zeros(2))
    assert loc.lambda_u == 2.0 and loc.lambda_s == 0.5
    assert np.allclose(np.abs(loc.u_plus), [1, 0]) and np.allclose(np.abs(loc.u_minus), [0, 1])
    assert loc.residual_u == 0.0 and loc.residual_s == 0.0


@pytest.mark.parametrize("kind", ["unstable", "stable"])
def test_linear_manifold_stays_on_eigenline(kind):
    loc = local_manifolds(SADDLE, np.zeros(2), seed_delta=1e-3)
    W = grow_manifold(SADDLE, loc, kind, depth=12, max_gap=0.05)
    other = 1 if kind == "unstable" else 0
    pts = W.points
    assert np.max(np.abs(pts[:, other])) <= 1e-10
    assert np.max(np.abs(pts[:, 1 - other])) > 1.0
    assert len(W.branches) == 2
    for b in W.branches:
        assert np.max(np.linalg.norm(np.diff(b["points"], axis=0), axis=1)) <= 0.05
        assert not b["corner"].any()


def test_linear_flip_saddle_orders_branches():
    smap = LinearMap(np.diag([-3.0, 0.2]))
    loc = local_manifolds(smap, np.zeros(2), seed_delta=1e-3)
    W = grow_manifold(smap, loc, "unstable", depth=6, max_gap=0.05)
    for b in W.branches:
        x = b["points"][:, 0]
        assert np.all(np.diff(np.abs(x)) > 0)
        assert np.all(np.sign(x) == np.sign(x[0]))


def test_non_saddle_rejected():
    with pytest.raises(NonHyperbolicError):
        local_manifolds(LinearMap(np.diag([0.5, 0.3])), np.zeros(2))
    rot = 1.5 * np.array([[math.cos(1), -math.sin(1)], [math.sin(1), math.cos(1)]])
    with pytest.raises(NonHyperbolicError):
        local_manifolds(LinearMap(rot), np.zeros(2))


def test_linear_stub_has_only_the_origin():
    seeds = seed_grid(np.zeros(2), 0.5, 5)
    for m in (1, 2, 3):
        orbits, failed = find_periodic_points(SADDLE, m, seeds)
        assert len(orbits) == 1 and failed == 0
        assert np.allclose(orbits[0].point, 0.0, atol=1e-12)
        assert orbits[0].minimal_period == 1 and orbits[0].stability == "saddle"


# ---------------------------------------------------------------------------
# intersections


def _stub_curve(points, kind):
    points = np.asarray(points, dtype=float)
    k = len(points)
    return ManifoldCurve(kind=kind, z_star=np.zeros(2), direction=np.array([1.0, 0.0]), seed_delta=1e-5,
                         max_gap=1.0, branches=[dict(points=points, s=np.linspace(1, 2, k), depth=np.zeros(k, int),
                                                     corner=np.zeros(k, bool))])


def test_perpendicular_stubs_cross_once():
    P = np.array([[0.0, 1.0], [2.0, 1.0]])
    Q = np.array([[1.0, 0.0], [1.0, 2.0]])
    hits = polyline_intersections(P, Q)
    assert len(hits) == 1
    i, j, a, b, ang = hits[0]
    assert (a, b) == (0.5, 0.5) and ang == pytest.approx(math.pi / 2)
    found = find_homoclinic(_stub_curve(Q, "stable"), _stub_curve(P, "unstable"))
    assert len(found) == 1
    assert np.allclose(found[0].point, [1.0, 1.0]) and found[0].angle == pytest.approx(math.pi / 2)


def test_parallel_stubs_do_not_cross():
    P = np.array([[0.0, 1.0], [2.0, 1.0], [3.0, 1.0]])
    Q = P + [0.0, 0.5]
    assert polyline_intersections(P, Q) == []
    assert find_homoclinic(_stub_curve(Q, "stable"), _stub_curve(P, "unstable")) == []


def test_shallow_crossing_filtered_by_angle():
    P = np.array([[0.0, 1.0], [2.0, 1.0]])
    Q = np.array([[0.0, 1.0 - 1e-4], [2.0, 1.0 + 1e-4]])
    assert len(polyline_intersections(P, Q)) == 1
    assert find_homoclinic(_stub_curve(Q, "stable"), _stub_curve(P, "unstable"), angle_min=1e-3) == []


# ---------------------------------------------------------------------------
# fixture: local structure


def test_lambda_residual_second_order(osc_chaos):
    smap, orb, rep = osc_chaos
    loc = rep.local
    deltas = [1e-3, 5e-4, 2.5e-4]
    rel = []
    for d in deltas:
        ru, rs = lambda_residuals(smap, orb.z_star, loc.lambda_u, loc.lambda_s, loc.u_plus, loc.u_minus, d)
        rel.append((ru / d, rs / d))
    rel = np.array(rel)
    # residual per unit delta halves with delta
    for col in range(2):
        ratios = rel[:-1, col] / rel[1:, col]
        assert np.all(np.abs(ratios - 2.0) <= 0.4)


def test_unstable_direction_aligns_with_A2(osc, osc_family, osc_grazing_matrices):
    A2 = osc_grazing_matrices.A[:, 1]
    theta_small = osc_family.theta0() / 32
    s = osc_family.samples[-1]
    z = simulate(osc, State(s.phase - s.theta, s.z_star), s.phase - theta_small, s.mu).z_final
    orb = find_periodic(osc, theta_small, s.mu, z)
    loc = local_manifolds(StroboscopicMap(osc, theta_small, s.mu), orb.z_star, orb.jacobian)
    ang = math.degrees(math.acos(abs(loc.u_plus @ A2) / np.linalg.norm(A2)))
    assert ang <= 5.0


def test_local_manifold_validation(osc_chaos):
    smap, orb, rep = osc_chaos
    loc = rep.local
    assert loc.lambda_u < -1 and 0 < abs(loc.lambda_s) < 1
    assert loc.residual_u <= 0.1 * abs(loc.lambda_u) * loc.seed_delta
    assert loc.residual_s <= 0.1 * loc.seed_delta / abs(loc.lambda_s)
    assert loc.seed_delta == pytest.approx(1e-5 * np.linalg.norm(orb.z_star) + 1e-8)


# ---------------------------------------------------------------------------
# fixture: global manifolds


def test_unstable_manifold_has_corner(osc_chaos):
    smap, orb, rep = osc_chaos
    # the first crossing of the touching set lies beyond the report's default length cap
    Wu = grow_manifold(smap, rep.local, "unstable", 16, 0.1, max_length=8.0)
    assert any(b["corner"].any() for b in Wu.branches)
    for b in Wu.branches:
        i = int(np.argmax(b["corner"]))
        if b["corner"][i]:
            assert b["contacts"][i] != b["contacts"][i - 1]
            # before the corner every image came through exactly the saddle's single impact
            assert set(b["contacts"][:i]) <= {-1, orb.N_plus_1}


def test_unstable_arclength_ratio(osc_chaos):
    Wu, _ = osc_chaos[2].manifolds
    lam = abs(osc_chaos[2].local.lambda_u)
    b = Wu.branches[0]
    lengths = []
    for k in range(4):
        p = b["points"][b["depth"] == k]
        lengths.append(float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1))))
    ratios = np.array(lengths[1:]) / np.array(lengths[:-1])
    assert np.all(np.abs(ratios / lam - 1) <= 0.2)


def test_manifold_gaps(osc_chaos):
    for W in osc_chaos[2].manifolds:
        for b in W.branches:
            gaps = np.linalg.norm(np.diff(b["points"], axis=0), axis=1)
            assert np.max(gaps) <= W.max_gap


@pytest.mark.parametrize("which", [0, 1])
def test_manifold_invariance(osc_chaos, which):
    smap, orb, rep = osc_chaos
    W = rep.manifolds[which]
    inverse = W.kind == "stable"
    keys = {(round(float(s), 15), int(k)) for b in W.branches for s, k in zip(b["s"], b["depth"])}
    checked = 0
    for b in W.branches:
        for i in range(0, len(b["points"]) - 1, max(1, len(b["points"]) // 20)):
            s0, k0 = b["s"][i], b["depth"][i]
            s1, k1 = b["s"][i + 1], b["depth"][i + 1]
            if k0 != k1 or (round(float(s0), 15), int(k0) + 1) not in keys or (round(float(s1), 15), int(k1) + 1) not in keys:
                continue
            q = 0.5 * (b["points"][i] + b["points"][i + 1])
            img, _ = smap.step(q, inverse=inverse)
            assert _curve_distance(img, W) <= W.max_gap
            checked += 1
    assert checked >= 5


# ---------------------------------------------------------------------------
# fixture: homoclinic points


def test_fixture_homoclinic_points(osc_chaos):
    smap, orb, rep = osc_chaos
    hs = rep.homoclinic_points
    assert len(hs) >= 1
    good = [h for h in hs if h.angle >= 1e-3 and h.refined and h.forward_monotone]
    assert good
    for h in good:
        assert len(h.forward_distances) == 5
        assert h.refine_residual <= 1e-9
        assert np.linalg.norm(h.point - orb.z_star) > 10 * rep.local.seed_delta


def test_homoclinic_points_persist_under_gap_halving(osc_chaos, osc_homoclinic_half_gap):
    rep = osc_chaos[2]
    gap, hs2 = osc_homoclinic_half_gap
    assert hs2
    for h in rep.homoclinic_points:
        if not h.refined:
            continue
        d = min(np.linalg.norm(h2.point - h.point) for h2 in hs2)
        assert d <= 10 * gap


# ---------------------------------------------------------------------------
# Lyapunov exponents


def test_lyapunov_stable_orbit(osc, osc_orbit_far, osc_lyapunov_far):
    est = osc_lyapunov_far
    rho = np.max(np.abs(np.linalg.eigvals(osc_orbit_far.jacobian)))
    target = math.log(rho) / osc.period
    assert est.mean < 0
    assert abs(est.mean / target - 1) <= 0.05
    assert est.fallback_steps == 0


def test_lyapunov_ball_at_rest():
    smap = StroboscopicMap(bouncing_ball(), 0.25, 0.0)
    est = lyapunov_exponent(smap, np.zeros(2), n_iter=10, burn_in=1, n_blocks=2)
    assert est.mean <= 0
    assert est.as_dict()["sticking_dominated"]


def test_lyapunov_positive_past_grazing(osc_chaos):
    lyap = osc_chaos[2].lyapunov
    assert lyap.mean > 0 and lyap.mean - lyap.band > 0


def test_lyapunov_robust_to_longer_run(osc_chaos):
    smap, orb, rep = osc_chaos
    copts = ChaosOptions()
    lyap = rep.lyapunov
    longer = lyapunov_exponent(smap, orb.z_star + copts.lyap_offset * np.eye(2)[0], 2 * copts.lyap_iter,
                               copts.lyap_burn_in, copts.lyap_blocks)
    assert abs(longer.mean - lyap.mean) <= max(lyap.band, longer.band)
    assert longer.mean > 0


# ---------------------------------------------------------------------------
# periodic points


def test_period_one_recovers_fixed_point(osc_chaos):
    smap, orb, rep = osc_chaos
    orbits, _ = find_periodic_points(smap, 1, [orb.z_star + [1e-3, -1e-3]])
    assert len(orbits) == 1
    assert np.linalg.norm(orbits[0].point - orb.z_star) <= 1e-8
    assert orbits[0].stability == "saddle"


def test_census_saddle_orbits(osc_chaos):
    smap, orb, rep = osc_chaos
    saddles = rep.saddle_orbits
    assert len(saddles) >= 2
    assert rep.m is not None and rep.m <= 6
    for p in saddles:
        assert p.residual <= 1e-8
        assert np.linalg.norm(smap.iterate(p.point, p.m) - p.point) <= 1e-8
    # distinct orbits: no point of one lies on another
    for a in range(len(saddles)):
        for b in range(a + 1, len(saddles)):
            assert np.min(np.linalg.norm(saddles[a].orbit[:, None] - saddles[b].orbit[None], axis=2)) > 1e-6


def test_report_far_from_grazing_is_quiet(osc, osc_theta, osc_orbit_far):
    smap = StroboscopicMap(osc, osc_theta, osc_orbit_far.mu)
    rep = chaos_report(smap, osc_orbit_far.z_star, osc_orbit_far.jacobian,
                       ChaosOptions(lyap_iter=200, lyap_burn_in=50))
    assert rep.local is None and rep.homoclinic_points == []
    assert rep.lyapunov.mean < 0 and rep.lyapunov.mean + rep.lyapunov.band < 0
    assert any("no manifolds" in n for n in rep.notes)
    d = rep.as_dict()
    assert d["disclaimer"] and d["eigen"] is None
