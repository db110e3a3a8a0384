"""Shared, expensive objects: the oscillator family and its grazing analysis."""

import numpy as np
import pytest

from vibroimpact.fixtures import free_orbit, impact_oscillator
from vibroimpact.orbit import continue_family, detect_grazing, find_periodic, settle


@pytest.fixture(scope="session")
def osc():
    return impact_oscillator()


@pytest.fixture(scope="session")
def osc_theta(osc):
    return osc.period / 4


@pytest.fixture(scope="session")
def osc_orbit_far(osc, osc_theta):
    """Stable one-impact orbit far from grazing (mu = 0.5), from a settled transient."""
    z = free_orbit(osc, -osc_theta, 0.5)
    z[0] = max(z[0], 0.2)
    z = settle(osc, osc_theta, 0.5, z, 300)
    return find_periodic(osc, osc_theta, 0.5, z)


@pytest.fixture(scope="session")
def osc_family(osc, osc_theta, osc_orbit_far):
    """Family continued from mu = 0.5 toward grazing, with the grazing point located."""
    fam = continue_family(osc, osc_theta, 0.5, 0.0, osc_orbit_far)
    detect_grazing(fam)
    return fam


@pytest.fixture(scope="session")
def osc_grazing_matrices(osc, osc_family):
    from vibroimpact.grazing import limit_matrix_A

    return limit_matrix_A(osc, osc_family)


@pytest.fixture(scope="session")
def osc_chaos(osc, osc_theta, osc_family):
    """Chaos report just past grazing (mu = 0.08), where the orbit is a saddle."""
    from vibroimpact.chaosdiag import StroboscopicMap, chaos_report

    mu = 0.08
    fam = continue_family(osc, osc_theta, 0.5, mu, osc_family.samples[0], mu_grid=[mu])
    orb = fam.samples[-1]
    smap = StroboscopicMap(osc, osc_theta, mu)
    return smap, orb, chaos_report(smap, orb.z_star, orb.jacobian)


@pytest.fixture(scope="session")
def osc_grazing_report(osc, osc_family):
    from vibroimpact.grazing import grazing_report

    return grazing_report(osc, osc_family, leev_samples=100, seed=0)


@pytest.fixture(scope="session")
def two_impact_orbit():
    """Stiffer, more damped oscillator whose period-one attractor hits the wall twice."""
    sys = impact_oscillator(wd_ratio=2.5, zeta=0.05)
    theta, mu = sys.period / 4, 1.0
    z = free_orbit(sys, -theta, mu)
    z[0] = max(z[0], 0.2)
    z = settle(sys, theta, mu, z, 300)
    return sys, theta, find_periodic(sys, theta, mu, z)


@pytest.fixture(scope="session")
def osc_homoclinic_half_gap(osc_chaos):
    """Homoclinic points recomputed with the manifold point spacing halved."""
    from vibroimpact.chaosdiag import ChaosOptions, find_homoclinic, grow_manifold

    smap, orb, rep = osc_chaos
    copts = ChaosOptions()
    gap = copts.max_gap / 2
    Wu = grow_manifold(smap, rep.local, "unstable", copts.depth, gap, max_length=copts.max_length)
    Ws = grow_manifold(smap, rep.local, "stable", copts.depth, gap, max_length=copts.max_length)
    return gap, find_homoclinic(Ws, Wu, copts.refine_tol, copts.angle_min, smap)


@pytest.fixture(scope="session")
def osc_lyapunov_far(osc, osc_theta, osc_orbit_far):
    from vibroimpact.chaosdiag import StroboscopicMap, lyapunov_exponent

    smap = StroboscopicMap(osc, osc_theta, osc_orbit_far.mu)
    return lyapunov_exponent(smap, osc_orbit_far.z_star + [1e-2, 0.0], n_iter=200, burn_in=100, n_blocks=10)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
