import numpy as np
import pytest

from sweeplab.catalog import catalog, catalog_entry
from sweeplab.desing import (
    DesingularizationError,
    build_majorant,
    build_map,
    sigma_from_talweg,
    verify_desingularized,
)
from sweeplab.talweg import CriticalValueError, TalwegTable, sample_talweg

DISK = catalog_entry("shrinking_disk").build()
GROW = catalog_entry("expanding_disk").build()
QUAD = catalog_entry("sublevel_quadratic").build()
OSC = catalog_entry("oscillatory_interval").build()


@pytest.fixture(scope="module")
def quad_map():
    return build_map(QUAD, -0.25, 0.0)


def test_majorant_examples():
    tab = sample_talweg(DISK, 0.0, 0.5, 21)
    assert np.array_equal(build_majorant(tab).phi_up, tab.phi_up)
    tab = sample_talweg(QUAD, -0.25, -1e-3, 33)
    assert np.allclose(build_majorant(tab).phi_up, tab.phi_up, rtol=0, atol=1e-9)
    tab = sample_talweg(GROW, 0.0, 1.0, 21)
    assert np.array_equal(build_majorant(tab).phi_up, np.ones(21))


def test_majorant_rejects_interior_critical():
    tab = TalwegTable(np.array([0.0, 0.5, 1.0]), np.array([1.0, np.inf, 1.0]), np.array([1.0, np.inf, 1.0]),
                      np.zeros((3, 1)), np.array([False, True, False]))
    with pytest.raises(CriticalValueError):
        build_majorant(tab)


def test_disk_map_is_identity_shift():
    m = build_map(DISK, 0.0, 0.5)
    r = np.linspace(0, m.rho, 11)
    assert m.rho == pytest.approx(0.5, abs=1e-14)
    assert np.allclose(m.psi(r), r, atol=1e-12)
    assert np.allclose(m.psi_prime(r), 1.0)
    m = build_map(GROW, 0.0, 1.0)
    assert np.allclose(m.psi(np.linspace(0, 1, 9)), np.linspace(0, 1, 9), atol=1e-12)


def test_quadratic_map_closed_form(quad_map):
    m = quad_map
    assert m.rho == pytest.approx(0.5, abs=1e-3)
    r = np.linspace(0, 0.45, 50)
    assert np.max(np.abs(m.psi(r) - (-(0.5 - r) ** 2))) <= 1e-3
    assert np.max(np.abs(m.psi_prime(r) - 2 * (0.5 - r))) <= 2e-3


def test_map_invariants(quad_map):
    m = quad_map
    assert abs(m.psi(0.0) - m.a) <= 1e-9 and abs(m.psi(m.rho) - m.b) <= 1e-9
    t, th = m.theta_nodes[:, 0], m.theta_nodes[:, 1]
    assert np.all(np.diff(th) > 0)
    assert np.max(np.abs(m.psi(th) - t)) <= 1e-6
    r = np.linspace(0, m.rho, 257)
    assert np.max(np.abs(m.theta(m.psi(r)) - r)) <= 1e-6
    assert np.all(np.diff(m.psi(r)) > 0)
    assert np.all(m.psi_prime(r) <= 1.0)
    s = m.samples()
    assert s.shape == (257, 3)


def test_verify_examples(quad_map):
    c = verify_desingularized(DISK, build_map(DISK, 0.0, 0.5))
    assert c.passed and c.max_value == pytest.approx(1.0, abs=1e-12)
    c = verify_desingularized(QUAD, quad_map)
    assert c.passed and abs(c.max_value - 1.0) <= 1e-6
    c = verify_desingularized(GROW, build_map(GROW, 0.0, 1.0))
    assert c.passed and c.max_value == 0.0


def test_no_map_for_divergent_talweg():
    with pytest.raises(DesingularizationError):
        build_map(OSC, 0.0, 0.3, table=sample_talweg(OSC, 0.0, 0.3, per_level=1024))


def test_sigma_examples():
    s = sigma_from_talweg(DISK, 0.0, 0.5)
    assert s(0.0) == 0.0 and s(0.3) == pytest.approx(0.3, abs=1e-12)
    s = sigma_from_talweg(QUAD, -0.25, 0.0)
    t = np.linspace(-0.25, -0.01, 30)
    assert np.max(np.abs(s(t) - (0.5 - np.sqrt(-t)))) <= 1e-3
    assert sigma_from_talweg(GROW, 0.0, 1.0).total == 0.0


@pytest.mark.parametrize("entry", [e for e in catalog() if e.verdict == "convergent"], ids=lambda e: e.name)
def test_bound_on_convergent_catalog(entry):
    m = build_map(entry.build(), *entry.window)
    r = np.linspace(0, m.rho, 257)
    assert np.all(m.psi_prime(r) <= 1.0)
    assert verify_desingularized(entry.build(), m, samples=65).max_value <= 1 + 1e-3
